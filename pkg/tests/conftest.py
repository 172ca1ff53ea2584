import numpy as np
import pytest

from fchkit.ansatz import AnsatzParams, assemble_Phi
from fchkit.geometry import BaseCurve, MeanderVector, build_interface
from fchkit.potential import WellSpec
from fchkit.profile1d import build_profiles
from fchkit.slowspace import build_basis, build_index_sets

EPS = 0.1
R0 = 2.0
ELL = 0.9
L = 2.0 * np.pi
N = 256
SIGMA = 0.15


@pytest.fixture(scope="session")
def well():
    return WellSpec(gamma=0.3)


@pytest.fixture(scope="session")
def profiles(well):
    return build_profiles(well)


@pytest.fixture(scope="session")
def circle_setup(profiles):
    """Shared eps = 0.1 circle assembly used across module tests."""
    base = BaseCurve.circle(R0, 512)
    iset = build_index_sets(EPS, 0.1 * profiles.lam0**2, profiles.lam0,
                            R0=R0)
    p = MeanderVector(np.zeros(iset.N1))
    interface = build_interface(base, p)
    params = AnsatzParams(p, EPS, sigma=SIGMA, ell=ELL, L=L, n=N,
                          resolution_factor=2.0)
    Phi, sigma, frame = assemble_Phi(params, profiles, interface)
    return {"base": base, "iset": iset, "p": p, "interface": interface,
            "Phi": Phi, "sigma": sigma, "frame": frame, "eps": EPS}


@pytest.fixture(scope="session")
def circle_basis(circle_setup, profiles):
    s = circle_setup
    return build_basis(s["iset"], profiles, s["interface"], s["eps"],
                       sigma=s["sigma"], ell=ELL, L=L, n=N,
                       frame=s["frame"])
