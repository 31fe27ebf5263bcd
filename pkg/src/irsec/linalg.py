"""Dense complex Hermitian linear-algebra kernels.

Every eigen-solve in the package goes through the real-symmetric 2n x 2n
embedding of a complex Hermitian matrix,

    embed(X + jY) = [[X, -Y], [Y, X]],

which doubles the spectrum but lets a single real kernel serve both this
module and the SDP solver. De-duplication of the doubled spectrum is
handled here.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class EigenPair(NamedTuple):
    value: float
    vector: np.ndarray  # unit-norm complex vector


class Rank1Extraction(NamedTuple):
    q: np.ndarray       # unit-modulus complex vector
    residual: float     # Frobenius distance between q q^H and the input


def check_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def check_hermitian(a: np.ndarray, tol: float = 1e-10, name: str = "matrix") -> np.ndarray:
    """Validate conjugate symmetry (relative to the matrix scale) and return a."""
    a = check_square(a, name)
    scale = max(1.0, float(np.abs(a).max()) if a.size else 1.0)
    dev = float(np.abs(a - a.conj().T).max())
    if dev > tol * scale:
        raise ValueError(f"{name} is not Hermitian: max asymmetry {dev:.3e} exceeds {tol:.1e}*scale")
    return a


def hermitianize(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (a + a^H) / 2."""
    return (a + a.conj().T) / 2


def embed_hermitian(h: np.ndarray) -> np.ndarray:
    """Real-symmetric embedding [[X, -Y], [Y, X]] of H = X + jY."""
    x = h.real
    y = h.imag
    return np.block([[x, -y], [y, x]])


def unembed_hermitian(e: np.ndarray) -> np.ndarray:
    """Inverse of embed_hermitian with orthogonal projection onto the embedded subspace.

    Arbitrary symmetric 2n x 2n matrices are averaged over the structure
    symmetry before extraction, so the result is exactly Hermitian.
    """
    n2 = e.shape[0]
    if n2 % 2:
        raise ValueError("embedded matrix must have even dimension")
    n = n2 // 2
    x = (e[:n, :n] + e[n:, n:]) / 2
    y = (e[n:, :n] - e[:n, n:]) / 2
    y = (y - y.T) / 2
    return hermitianize(x + 1j * y)


def complex_from_embedded(v: np.ndarray) -> np.ndarray:
    """Map an embedded real eigenvector (u; w) to the complex vector u + jw."""
    n = v.shape[0] // 2
    return v[:n] + 1j * v[n:]


def hermitian_eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full ascending spectrum of a Hermitian matrix via the real embedding.

    Returns (values, vectors) with vectors in columns. The doubled spectrum
    of the embedding is thinned by keeping every other eigenvalue; the
    matching complex eigenvectors are re-orthonormalized per repeated block.
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    vals2, vecs2 = np.linalg.eigh(embed_hermitian(h))
    # each complex eigenvalue appears twice and consecutively in the sorted list
    vals = vals2[::2].copy()
    vecs = np.empty((n, n), dtype=complex)
    for k in range(n):
        v = complex_from_embedded(vecs2[:, 2 * k])
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            v = complex_from_embedded(vecs2[:, 2 * k + 1])
            nv = np.linalg.norm(v)
        v = v / nv
        # re-orthogonalize against previously accepted vectors of the same eigenvalue
        for j in range(k - 1, -1, -1):
            if abs(vals[j] - vals[k]) > 1e-9 * max(1.0, abs(vals[k])):
                break
            v = v - vecs[:, j] * (vecs[:, j].conj() @ v)
        nv = np.linalg.norm(v)
        if nv < 1e-10:
            # degenerate pairing; take the second embedded vector of the pair
            v = complex_from_embedded(vecs2[:, 2 * k + 1])
            for j in range(k - 1, -1, -1):
                if abs(vals[j] - vals[k]) > 1e-9 * max(1.0, abs(vals[k])):
                    break
                v = v - vecs[:, j] * (vecs[:, j].conj() @ v)
            nv = np.linalg.norm(v)
        vecs[:, k] = v / nv
        vals[k] = float(np.real(vecs[:, k].conj() @ h @ vecs[:, k]))
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def hermitian_eig_max(h: np.ndarray, tol: float = 1e-10) -> EigenPair:
    """Largest eigenvalue and a unit eigenvector of a Hermitian matrix."""
    h = check_hermitian(np.asarray(h, dtype=complex), tol=tol)
    vals, vecs = np.linalg.eigh(embed_hermitian(h))
    v = complex_from_embedded(vecs[:, -1])
    v = v / np.linalg.norm(v)
    lam = float(np.real(v.conj() @ h @ v))
    return EigenPair(lam, v)


def psd_sqrt(h: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root S with S @ S = H.

    Eigenvalues below -1e-10 (relative to the largest) are rejected,
    smaller negative noise is clipped to zero.
    """
    h = check_hermitian(np.asarray(h, dtype=complex))
    e = embed_hermitian(h)
    vals, vecs = np.linalg.eigh(e)
    lmax = float(vals[-1]) if vals.size else 0.0
    floor = -1e-10 * max(1.0, abs(lmax))
    lmin = float(vals[0]) if vals.size else 0.0
    if lmin < floor:
        raise ValueError(f"matrix is not PSD: min eigenvalue {lmin:.3e}")
    vals = np.clip(vals, 0.0, None)
    s_emb = (vecs * np.sqrt(vals)) @ vecs.T
    return unembed_hermitian(s_emb)


def generalized_rayleigh_max(
    a: np.ndarray, b: np.ndarray, min_eig_floor: float = 1e-12
) -> tuple[float, np.ndarray]:
    """Maximize x^H B x / x^H A x over unit x for Hermitian PD A and PSD B.

    Returns (gamma, x) with gamma = lambda_max(A^{-1} B) and x the matching
    unit eigenvector. When A is nearly singular a ridge of
    1e-10 * tr(A)/dim is added before factorization; this preserves the
    quotient to first order while guaranteeing solvability. A matrix that
    stays singular beyond the ridge is rejected.
    """
    a = check_hermitian(np.asarray(a, dtype=complex), name="A")
    b = check_hermitian(np.asarray(b, dtype=complex), name="B")
    if a.shape != b.shape:
        raise ValueError("A and B must share a dimension")
    n = a.shape[0]
    lmin = float(np.linalg.eigvalsh(embed_hermitian(a))[0])
    if lmin <= min_eig_floor:
        tr = float(np.real(np.trace(a)))
        ridge = 1e-10 * tr / n
        if lmin + ridge <= 0.0:
            raise ValueError(f"A is singular beyond the ridge threshold (min eig {lmin:.3e})")
        a = a + ridge * np.eye(n)
    chol = np.linalg.cholesky(a)
    t = np.linalg.solve(chol, b)
    m = np.linalg.solve(chol, t.conj().T).conj().T
    pair = hermitian_eig_max(hermitianize(m))
    x = np.linalg.solve(chol.conj().T, pair.vector)
    x = x / np.linalg.norm(x)
    return float(pair.value), x


def rank1_extract(theta: np.ndarray, diag_tol: float = 1e-3) -> Rank1Extraction:
    """Unit-modulus phase vector from a near rank-1 PSD matrix with unit diagonal.

    Uses principal-eigenvector phase projection: q_n = exp(j arg(v_n)).
    Literal Cholesky of a near-singular matrix is unstable here, whereas the
    phase projection is total: a zero eigenvector entry falls back to phase 0.
    The Frobenius residual against q q^H is reported so callers can flag
    inputs far from rank one.
    """
    theta = check_hermitian(np.asarray(theta, dtype=complex), name="theta")
    d = np.real(np.diag(theta))
    if np.max(np.abs(d - 1.0)) > diag_tol:
        raise ValueError(f"diagonal deviates from one by {np.max(np.abs(d - 1.0)):.3e}")
    pair = hermitian_eig_max(theta)
    v = pair.vector
    q = np.ones_like(v)
    nz = np.abs(v) > 0.0
    q[nz] = v[nz] / np.abs(v[nz])
    residual = float(np.linalg.norm(theta - np.outer(q, q.conj())))
    return Rank1Extraction(q, residual)
