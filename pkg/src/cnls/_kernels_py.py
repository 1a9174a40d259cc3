"""Pure numpy versions of the inner-loop kernels.

Same signatures and semantics as the compiled ``cnls._kernels`` module;
:mod:`cnls.kernels` picks one of the two at import time.

Fields are passed as C-contiguous ``(N, M)`` complex arrays: N components,
M flattened grid points.
"""
import numpy as np
from scipy.linalg import solve_banded

# moduli below this are clamped inside negative-exponent factors only
MODULUS_FLOOR = 1e-300
# relative floor under which a component does not constrain the step size
PHASE_FLOOR = 1e-12


def multiplier(phi, mu, beta, p):
    """Real nonlinear multiplier N_j with d/dt phi_j = i (lap + N_j) phi_j."""
    amp = np.abs(phi)
    n_comp = phi.shape[0]
    out = mu[:, None] * amp ** (p - 1.0)
    if n_comp > 1:
        a = 0.5 * (p + 1.0)
        b = 0.5 * (p - 3.0)
        cross = amp ** a
        own = np.maximum(amp, MODULUS_FLOOR) ** b if b < 0 else amp ** b
        coupling = beta @ cross
        out += coupling * own
    return out


def _phase_mask(phi, p):
    if p >= 3.0:
        return None
    amp = np.abs(phi)
    peak = amp.max(axis=1, keepdims=True)
    return amp > PHASE_FLOOR * peak


def max_multiplier(phi, mu, beta, p):
    """max_j,x |N_j(x)| over points where phi_j is not negligible."""
    mult = np.abs(multiplier(phi, mu, beta, p))
    mask = _phase_mask(phi, p)
    if mask is not None:
        mult = np.where(mask, mult, 0.0)
    return float(mult.max()) if mult.size else 0.0


def rotate_phase(phi, mu, beta, p, dt):
    """In-place exact nonlinear substep phi_j <- phi_j exp(i dt N_j).

    Returns the largest phase increment dt*|N_j| applied at a
    non-negligible point.
    """
    mult = multiplier(phi, mu, beta, p)
    phi *= np.exp(1j * dt * mult)
    mask = _phase_mask(phi, p)
    mult = np.abs(mult)
    if mask is not None:
        mult = np.where(mask, mult, 0.0)
    return float(dt * mult.max()) if mult.size else 0.0


def potential_density(phi, mu, beta, p):
    """Pointwise integrand of the testing functional P (cross terms counted twice)."""
    amp = np.abs(phi)
    dens = (mu[:, None] * amp ** (p + 1.0)).sum(axis=0)
    if phi.shape[0] > 1:
        cross = amp ** (0.5 * (p + 1.0))
        dens += np.einsum("ij,ix,jx->x", beta, cross, cross)
    return dens


def tridiag_solve(lower, diag, upper, rhs):
    """Solve a complex tridiagonal system; lower[k] couples row k to k-1, upper[k] to k+1."""
    n = diag.shape[0]
    ab = np.zeros((3, n), dtype=np.complex128)
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)
