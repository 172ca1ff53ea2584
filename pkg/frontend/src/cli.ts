#!/usr/bin/env node
/** Command-line entry point: `fchkit-viz render --in DIR --out DIR [--movie]`. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { renderExperiment } from "./render.js";

export async function main(argv: string[]): Promise<number> {
  let status = 0;
  await yargs(argv)
    .command(
      "render",
      "render an experiment artifact directory to SVG images",
      (y) =>
        y
          .option("in", {
            type: "string",
            demandOption: true,
            describe: "experiment output directory (summary.json etc.)",
          })
          .option("out", {
            type: "string",
            demandOption: true,
            describe: "directory for the rendered images",
          })
          .option("movie", {
            type: "boolean",
            default: false,
            describe: "also write an HTML frame-cycling viewer",
          }),
      async (args) => {
        try {
          const manifest = await renderExperiment(args.in, args.out, {
            movie: args.movie,
          });
          console.log(
            `rendered ${manifest.fieldImages.length} field images + ` +
              `timeseries panel to ${args.out}`,
          );
        } catch (err) {
          console.error(err instanceof Error ? err.message : String(err));
          status = 1;
        }
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(msg ?? (err ? err.message : "unknown error"));
      status = 2;
    })
    .parseAsync();
  return status;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
