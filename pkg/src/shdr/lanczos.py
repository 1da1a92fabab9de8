"""Restarted Lanczos for the algebraically largest eigenpairs of a symmetric operator."""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceFailure


def _orthogonalize(w, V, passes=2):
    for _ in range(passes):
        if V.shape[1]:
            w = w - V @ (V.T @ w)
    return w


def lanczos_largest(matvec, n, n_eig, tol=1e-8, max_iter=5000, seed=0,
                    deflate=None, krylov_dim=None):
    """Top ``n_eig`` eigenpairs of a symmetric linear operator.

    Uses full reorthogonalization with thick restarts: after each cycle the
    best Ritz vectors are kept and the Krylov basis is regrown from them.

    Args:
        matvec: callable returning ``A @ x`` for a length-n vector.
        n: operator dimension.
        n_eig: number of eigenpairs wanted.
        tol: residual bound ``||A u - lambda u||`` for every returned pair.
        max_iter: budget of matrix-vector products.
        seed: seeds the start vector.
        deflate: optional (n, r) orthonormal block to project out, e.g.
            known eigenvectors.
        krylov_dim: basis size before a restart.

    Returns:
        (eigenvalues descending, eigenvectors as columns, residual norms).

    Raises:
        ConvergenceFailure: if the residuals are not below ``tol`` within
            ``max_iter`` products.
    """
    rng = np.random.default_rng(seed)
    P = np.zeros((n, 0)) if deflate is None else np.asarray(deflate, dtype=float).reshape(n, -1)
    free = n - P.shape[1]
    if n_eig > free:
        raise ValueError(f"requested {n_eig} eigenpairs from a {free}-dimensional space")
    m = krylov_dim or min(free, max(2 * n_eig + 30, 60))
    m = max(min(m, free), n_eig)
    keep = min(max(n_eig + 10, 2 * n_eig), m - 1) if m > n_eig else n_eig

    def fresh():
        v = _orthogonalize(rng.standard_normal(n), np.hstack([P, V]))
        return v / np.linalg.norm(v)

    V = np.zeros((n, 0))
    AV = np.zeros((n, 0))
    v = fresh()
    n_matvec = 0
    while True:
        while V.shape[1] < m:
            V = np.column_stack([V, v])
            w = np.asarray(matvec(v), dtype=float)
            n_matvec += 1
            if P.shape[1]:
                w = w - P @ (P.T @ w)
            AV = np.column_stack([AV, w])
            if V.shape[1] == m:
                break
            r = _orthogonalize(w, np.hstack([P, V]))
            norm = np.linalg.norm(r)
            if norm <= 1e-10 * max(1.0, np.linalg.norm(w)):
                # invariant subspace: continue from a random direction
                if V.shape[1] + P.shape[1] >= n:
                    break
                v = fresh()
            else:
                v = r / norm
        H = V.T @ AV
        H = 0.5 * (H + H.T)
        theta, Q = np.linalg.eigh(H)
        order = np.argsort(theta)[::-1]
        theta, Q = theta[order], Q[:, order]
        Y = V @ Q
        AY = AV @ Q
        R = AY[:, :n_eig] - Y[:, :n_eig] * theta[:n_eig]
        res = np.linalg.norm(R, axis=0)
        if np.all(res <= tol) or V.shape[1] >= free:
            return theta[:n_eig], Y[:, :n_eig], res
        if n_matvec >= max_iter:
            raise ConvergenceFailure(
                f"Lanczos did not converge in {n_matvec} products "
                f"(max residual {res.max():.3e} > tol {tol:.1e})",
                residual=float(res.max()),
            )
        # thick restart: keep the leading Ritz vectors, regrow from the worst residual
        V, AV = Y[:, :keep], AY[:, :keep]
        worst = int(np.argmax(res))
        r = _orthogonalize(R[:, worst], np.hstack([P, V]))
        norm = np.linalg.norm(r)
        v = r / norm if norm > 1e-14 else fresh()
