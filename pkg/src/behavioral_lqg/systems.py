"""The two benchmark plants used throughout the tests and demos."""

from .lti_system import LqgWeights, LtiSystem


def example1():
    """Scalar unstable plant: A = 1.1, B = C = 1, Qw = 0.5, Rv = 0.8, Qx = Ru = 1."""
    return LtiSystem(A=1.1, B=1.0, C=1.0, Qw=0.5, Rv=0.8), LqgWeights(Qx=1.0, Ru=1.0)


EXAMPLE4_A = [[1.4918, 0.5967], [0.0, 1.4918]]
EXAMPLE4_B = [[0.1049], [0.4918]]
EXAMPLE4_C = [[1.0, 0.0]]
EXAMPLE4_QW = [[4.6477, 3.7575], [3.7575, 3.0639]]
EXAMPLE4_QX = [[3.0639, 3.7575], [3.7575, 4.6477]]


def example4():
    """Two-state plant with a double unstable eigenvalue 1.4918."""
    sys = LtiSystem(A=EXAMPLE4_A, B=EXAMPLE4_B, C=EXAMPLE4_C, Qw=EXAMPLE4_QW, Rv=2.5)
    return sys, LqgWeights(Qx=EXAMPLE4_QX, Ru=0.5966)


def config_dict(sys, weights):
    """System and weight blocks in the CLI config layout."""
    return {
        "system": {"A": sys.A.tolist(), "B": sys.B.tolist(), "C": sys.C.tolist(),
                   "Q_w": sys.Qw.tolist(), "R_v": sys.Rv.tolist()},
        "weights": {"Q_x": weights.Qx.tolist(), "R_u": weights.Ru.tolist()},
    }
