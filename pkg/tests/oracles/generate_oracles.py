"""Regenerate ``tests/data/oracles.json``.

Every value here is computed without importing the package: constants by
direct arithmetic, block kernels by extended-precision quadrature of the
matrix exponential, velocities by dense real-space diagonalization.  The
file is frozen; tests compare against it and never rewrite it.

Run from the repository root:  python3 tests/oracles/generate_oracles.py
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import mpmath
import numpy as np

OUT = Path(__file__).resolve().parents[1] / "data" / "oracles.json"
RHO0 = 1.2


def ledger(values, rho0=RHO0):
    p = len(values)
    diffs = [abs(a - b) for i, a in enumerate(values) for b in values[i + 1:]]
    gamma, Gamma = min(diffs), max(diffs)
    r = Gamma + gamma / 2
    C = 2**p * r**p + (r + 2) ** (p - 2)
    C_hat = C + 2 * rho0 + 1 / (2 * rho0)
    lam0 = math.sqrt(min(1.0, (gamma / 2) ** p / (2 * C_hat)))
    eta0 = math.log(rho0)
    return {
        "gamma": gamma, "Gamma": Gamma, "C": C, "C_hat": C_hat, "lambda0": lam0, "mu0": 1 / lam0,
        "eta0": eta0, "C2": C_hat / (eta0 * (gamma / 2) ** (p - 1)),
        "C3": 4 * math.pi * p**2 * (2 / gamma) ** (p - 1),
    }


def mp_fiber(values, mu, x):
    p = len(values)
    A = mpmath.zeros(p, p)
    for i, v in enumerate(values):
        A[i, i] = mu * v
    for i in range(p - 1):
        A[i, i + 1] = 1
        A[i + 1, i] = 1
    A[0, p - 1] += mpmath.expj(x)
    A[p - 1, 0] += mpmath.expj(-x)
    return A


def mp_kernel(values, mu, t, d, dps=25, nodes=128):
    """(1/2pi) int exp(-i t A(x)) exp(-i d x) dx by trapezoid in extended precision."""
    p = len(values)
    with mpmath.workdps(dps):
        acc = mpmath.zeros(p, p)
        for k in range(nodes):
            x = 2 * mpmath.pi * k / nodes
            acc += mpmath.expm(-1j * t * mp_fiber(values, mu, x)) * mpmath.expj(-d * x)
        acc /= nodes
        return [[complex(acc[i, j]) for j in range(p)] for i in range(p)]


def dense_hamiltonian(values, mu, N):
    n = np.arange(-N, N + 1)
    H = np.diag(mu * np.asarray(values, float)[np.mod(n, len(values))])
    H += np.diag(np.ones(2 * N), 1) + np.diag(np.ones(2 * N), -1)
    return n, H


def direct_velocity(values, mu, T, N, samples=64):
    """Mean of ||X psi(t)||/t over [0.75T, T], block and site units, dense eigh."""
    n, H = dense_hamiltonian(values, mu, N)
    w, q = np.linalg.eigh(H)
    psi0 = (n == 0).astype(float)
    c = q.T @ psi0
    ts = np.linspace(0.75 * T, T, samples)
    states = (np.exp(-1j * np.outer(ts, w)) * c) @ q.T
    prob = np.abs(states) ** 2
    j = np.floor_divide(n, len(values))
    block = np.sqrt(prob @ (j.astype(float) ** 2)) / ts
    site = np.sqrt(prob @ (n.astype(float) ** 2)) / ts
    return float(block.mean()), float(site.mean()), float(prob[:, :5].sum() + prob[:, -5:].sum())


def exact_velocity_variants(values, mu, M=512):
    """Band formula from numerically differentiated (spectral) bands: independent of the closed derivative."""
    p = len(values)
    xs = 2 * np.pi * np.arange(M) / M
    lam = 1 / mu
    mats = np.zeros((M, p, p), complex)
    idx = np.arange(p)
    mats[:, idx, idx] = np.asarray(values, float)
    mats[:, idx[:-1], idx[:-1] + 1] = lam
    mats[:, idx[:-1] + 1, idx[:-1]] = lam
    mats[:, 0, p - 1] += lam * np.exp(1j * xs)
    mats[:, p - 1, 0] += lam * np.exp(-1j * xs)
    z, v = np.linalg.eigh(mats)
    # spectral derivative of each sorted band
    k = np.fft.fftfreq(M, 1 / M)
    dz = np.real(np.fft.ifft(1j * k[:, None] * np.fft.fft(z, axis=0), axis=0))
    w = p * mu * np.einsum("nl,nl,nil->ni", dz, np.conj(v[:, 0, :]), v)
    A = math.sqrt(float(np.mean(np.sum(np.abs(w) ** 2, axis=1))))
    B = float(np.linalg.norm(w.mean(axis=0)))
    return A, B


def cplx(z):
    return [z.real, z.imag]


def main():
    pots = {"alternating": [1.0, -1.0], "p3": [0.0, 1.0, 2.0], "p4": [0.0, 1.0, 2.0, 3.0],
            "p5": [0.0, 1.0, 2.0, 3.0, 4.0], "p3_narrow": [0.0, 0.01, 0.02]}
    data = {"rho0": RHO0, "constants": {k: ledger(v) for k, v in pots.items()}}

    kernels = []
    for values, mu, t, d in [([1.0, -1.0], 3.0, 5.0, 4), ([1.0, -1.0], 10.0, 20.0, -3),
                             ([0.0, 1.0, 2.0], 5.0, 10.0, 2), ([0.0, 1.0, 2.0], 5.0, 10.0, -7)]:
        K = mp_kernel(values, mu, t, d)
        kernels.append({"V": values, "mu": mu, "t": t, "d": d, "K": [[cplx(z) for z in row] for row in K]})
    data["kernels"] = kernels

    vel = []
    for values, mu, T, N in [([1.0, -1.0], 10.0, 2000.0, 700), ([1.0, -1.0], 5.0, 600.0, 450),
                             ([0.0, 1.0, 2.0], 20.0, 4000.0, 150)]:
        blk, site, edge = direct_velocity(values, mu, T, N)
        A, B = exact_velocity_variants(values, mu)
        vel.append({"V": values, "mu": mu, "T": T, "N": N, "direct_block": blk, "direct_site": site,
                    "edge_mass": edge, "exact_A": A, "exact_B": B})
    data["velocities"] = vel

    # matchings of the 6-vertex path, counted by size
    data["matching_counts_p6"] = [1, 5, 6, 1]
    data["spectrum_p2_mu2_measure"] = 2 * (math.sqrt(8) - 2)

    OUT.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
