"""Small dense real linear algebra and reproducible random substreams."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError

SYMMETRY_RTOL = 1e-12
GS_DROP_TOL = 1e-10
JACOBI_OFF_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# above this size the cyclic sweeps get slow in pure numpy; LAPACK takes over
JACOBI_MAX_DIM = 32


def as_vector(x, dim=None, name="vector"):
    """Return ``x`` as a read-only 1-d float array after validation."""
    v = np.array(x, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} has non-finite entries")
    if dim is not None and v.size != dim:
        raise ValidationError(f"{name} has dimension {v.size}, expected {dim}")
    v.setflags(write=False)
    return v


def as_sym_matrix(m, name="matrix"):
    M = np.array(m, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = 1.0 + np.max(np.abs(M))
    if np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * scale:
        raise ValidationError(f"{name} is not symmetric")
    M.setflags(write=False)
    return M


def jacobi_eigenvalues(M, tol=JACOBI_OFF_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius mass falls below
    ``tol`` times the Frobenius norm of the input. Returns the eigenvalues
    sorted ascending.
    """
    A = np.array(M, dtype=float)
    n = A.shape[0]
    total = np.linalg.norm(A)
    if n == 1 or total == 0.0:
        return np.sort(np.diag(A))
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * total:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                h = A[q, q] - A[p, p]
                if abs(apq) < 1e-36 * abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
    return np.sort(np.diag(A))


def sym_eig_extremes(M):
    """Smallest and largest eigenvalue of a symmetric matrix."""
    M = as_sym_matrix(M)
    if M.shape[0] <= JACOBI_MAX_DIM:
        w = jacobi_eigenvalues(M)
    else:
        w = np.linalg.eigvalsh(M)
    return float(w[0]), float(w[-1])


@dataclass
class RngStream:
    """A single-owner random stream keyed by ``(master_seed, stream_index)``.

    Backed by numpy's counter-based Philox generator, so constructing stream
    ``k`` never depends on which other streams exist.
    """

    master_seed: int
    stream_index: int
    generator: np.random.Generator = field(repr=False)

    def random(self, size=None):
        return self.generator.random(size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)


def substream(master_seed, index):
    master_seed = int(master_seed)
    index = int(index)
    if master_seed < 0 or master_seed >= 2**64:
        raise ValidationError(f"master_seed must be an unsigned 64-bit integer, got {master_seed}")
    if index < 0:
        raise ValidationError(f"stream index must be nonnegative, got {index}")
    seq = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return RngStream(master_seed, index, np.random.Generator(np.random.Philox(seq)))


def gram_schmidt(vectors, drop_tol=GS_DROP_TOL):
    """Orthonormalize ``vectors`` (modified Gram-Schmidt with one re-orthogonalization).

    Vectors whose residual norm after projection is below ``drop_tol`` are
    dropped. Returns an array of shape ``(rank, d)``.
    """
    V = np.array(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] == 0 or V.shape[1] == 0:
        raise ValidationError("gram_schmidt expects a non-empty list of equal-length vectors")
    if not np.all(np.isfinite(V)):
        raise ValidationError("gram_schmidt input has non-finite entries")
    basis = []
    for v in V:
        w = v.copy()
        for _ in range(2):
            for b in basis:
                w -= np.dot(b, w) * b
        nrm = np.linalg.norm(w)
        if nrm >= drop_tol:
            basis.append(w / nrm)
    if not basis:
        raise ValidationError("gram_schmidt: input spans only the zero vector (empty basis)")
    out = np.array(basis)
    out.setflags(write=False)
    return out
