"""System parameters of the N-coupled power-law Schroedinger system."""
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError


def critical_power(n: int) -> float:
    """Mass-critical exponent 1 + 4/n."""
    return 1.0 + 4.0 / n


def energy_critical_power(n: int) -> float:
    """Upper end 1 + 4/(n-2)^+ of the admissible range (inf for n <= 2)."""
    return np.inf if n <= 2 else 1.0 + 4.0 / (n - 2)


@dataclass(frozen=True, eq=False)
class SystemParams:
    """Coefficients of the coupled system.

    ``beta`` must be exactly symmetric with zero diagonal; the self
    interaction lives in ``mu``.  ``linear=True`` marks the free
    (mu = 0, beta = 0) reference system used to test the linear flow; it is
    the only way to get a zero mu.
    """

    n: int
    N: int
    p: float
    mu: np.ndarray
    beta: np.ndarray
    lam: np.ndarray = None
    gamma: float = 2.0
    linear: bool = False

    def __post_init__(self):
        n, N = int(self.n), int(self.N)
        if n < 1:
            raise ParameterError(f"dimension n must be >= 1, got {self.n}")
        if N < 1:
            raise ParameterError(f"component count N must be >= 1, got {self.N}")
        p = float(self.p)
        if not (p >= 1.0 and p < energy_critical_power(n)):
            raise ParameterError(
                f"p must satisfy 1 <= p < 1+4/(n-2)^+ = {energy_critical_power(n)}, got {p}"
            )
        mu = np.array(self.mu, dtype=float).reshape(-1)
        if mu.shape != (N,):
            raise ParameterError(f"mu must have length N={N}, got {mu.shape[0]}")
        if self.linear:
            if np.any(mu != 0):
                raise ParameterError("the linear reference system has mu = 0")
        elif np.any(mu <= 0):
            raise ParameterError("mu_j must be positive")
        beta = np.zeros((N, N)) if self.beta is None else np.array(self.beta, dtype=float)
        if beta.size == 0 and N == 1:
            beta = np.zeros((1, 1))
        if beta.shape != (N, N):
            raise ParameterError(f"beta must be {N}x{N}, got shape {beta.shape}")
        for i in range(N):
            for j in range(i + 1, N):
                if beta[i, j] != beta[j, i]:
                    raise ParameterError(
                        f"beta must be symmetric: beta[{i + 1}][{j + 1}]={beta[i, j]} "
                        f"!= beta[{j + 1}][{i + 1}]={beta[j, i]}"
                    )
        if self.linear and np.any(beta != 0):
            raise ParameterError("the linear reference system has beta = 0")
        if np.any(np.diag(beta) != 0):
            raise ParameterError("beta must have zero diagonal (self terms belong to mu)")
        lam = np.ones(N) if self.lam is None else np.array(self.lam, dtype=float).reshape(-1)
        if lam.shape != (N,) or np.any(lam <= 0):
            raise ParameterError(f"lam must be {N} positive reals")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        for arr in (mu, beta, lam):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def mass_exponent(self) -> float:
        """p + 1 - n(p-1)/2, the power of M in G and in the GN inequality."""
        return self.p + 1.0 - self.n * (self.p - 1.0) / 2.0

    @property
    def virial_coefficient(self) -> float:
        """n(p-1)/(4(p+1)), the weight of P in Q."""
        return self.n * (self.p - 1.0) / (4.0 * (self.p + 1.0))

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def permuted(self, perm) -> "SystemParams":
        perm = np.asarray(perm)
        return replace(
            self,
            mu=self.mu[perm],
            lam=self.lam[perm],
            beta=self.beta[np.ix_(perm, perm)],
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "p": self.p,
            "mu": self.mu.tolist(),
            "beta": self.beta.tolist(),
            "lambda": self.lam.tolist(),
            "gamma": self.gamma,
        }


def linear_params(n, N=1, p=3.0) -> SystemParams:
    """The free Schroedinger flow written as a system (mu = beta = 0)."""
    return SystemParams(n=n, N=N, p=p, mu=np.zeros(N), beta=np.zeros((N, N)), linear=True)


def scalar_params(n, p, mu=1.0, lam=1.0, gamma=2.0) -> SystemParams:
    return SystemParams(n=n, N=1, p=p, mu=[mu], beta=[[0.0]], lam=[lam], gamma=gamma)


def reduce_to_scalar(params: SystemParams) -> SystemParams:
    """Project onto the first component: N=1, no coupling."""
    return SystemParams(
        n=params.n,
        N=1,
        p=params.p,
        mu=params.mu[:1],
        beta=np.zeros((1, 1)),
        lam=params.lam[:1],
        gamma=params.gamma,
        linear=params.linear,
    )
