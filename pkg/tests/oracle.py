"""Dense reference implementation of the discrete scheme.

Everything here is rebuilt from vertex coordinates with different formulas
from the package: gradients come from the metric tensor of each triangle,
integrals from edge-midpoint quadrature, and constrained systems are solved
with dense LU (zero-mean constraints via a Lagrange multiplier).
"""

import numpy as np


class DenseDisc:
    def __init__(self, vertices, triangles):
        self.X = np.asarray(vertices, dtype=float)
        if self.X.shape[1] == 2:
            self.X = np.c_[self.X, np.zeros(len(self.X))]
        self.T = np.asarray(triangles, dtype=np.int64)
        nt, nv = len(self.T), len(self.X)
        self.nt, self.nv = nt, nv

        edge_id = {}
        edge_tris = {}
        for t, tri in enumerate(self.T):
            for k in range(3):
                a, b = sorted((tri[(k + 1) % 3], tri[(k + 2) % 3]))
                if (a, b) not in edge_id:
                    edge_id[(a, b)] = len(edge_id)
                edge_tris.setdefault((a, b), []).append(t)
        self.edge_id = edge_id
        self.ne = len(edge_id)
        self.edges = np.array(sorted(edge_id, key=edge_id.get))
        self.boundary_edges = np.array([edge_id[e] for e, ts in edge_tris.items() if len(ts) == 1], dtype=np.int64)
        self.boundary_vertices = np.zeros(nv, dtype=bool)
        self.boundary_vertices[self.edges[self.boundary_edges].ravel()] = True
        self.closed = self.boundary_edges.size == 0

        self.area = np.zeros(nt)
        self.normal = np.zeros((nt, 3))
        self.dlam = np.zeros((nt, 3, 3))  # gradients of barycentric coordinates
        for t, (i, j, k) in enumerate(self.T):
            E = np.c_[self.X[j] - self.X[i], self.X[k] - self.X[i]]  # 3x2
            G = E.T @ E
            self.area[t] = 0.5 * np.sqrt(np.linalg.det(G))
            n = np.cross(E[:, 0], E[:, 1])
            self.normal[t] = n / np.linalg.norm(n)
            P = E @ np.linalg.inv(G)  # columns: gradients of the parameters s, t
            self.dlam[t, 1] = P[:, 0]
            self.dlam[t, 2] = P[:, 1]
            self.dlam[t, 0] = -P[:, 0] - P[:, 1]

        self.local_edge = np.zeros((nt, 3), dtype=np.int64)  # edge opposite local vertex k
        for t, tri in enumerate(self.T):
            for k in range(3):
                a, b = sorted((tri[(k + 1) % 3], tri[(k + 2) % 3]))
                self.local_edge[t, k] = edge_id[(a, b)]

        self._build()

    # piecewise-constant vector fields are stored as (nt*3,) vectors
    def _build(self):
        nt, nv, ne = self.nt, self.nv, self.ne
        self.Gp1 = np.zeros((3 * nt, nv))
        self.Gcr = np.zeros((3 * nt, ne))
        for t in range(nt):
            for k in range(3):
                self.Gp1[3 * t : 3 * t + 3, self.T[t, k]] += self.dlam[t, k]
                # CR function of the edge opposite k equals 1 - 2 lambda_k
                self.Gcr[3 * t : 3 * t + 3, self.local_edge[t, k]] += -2.0 * self.dlam[t, k]
        self.Jm = np.zeros((3 * nt, 3 * nt))
        for t in range(nt):
            n = self.normal[t]
            self.Jm[3 * t : 3 * t + 3, 3 * t : 3 * t + 3] = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
        self.Rp1 = -self.Jm @ self.Gp1
        self.Mx = np.repeat(self.area, 3)

        # P1 mass by edge-midpoint quadrature (exact for quadratics)
        self.Mp1 = np.zeros((nv, nv))
        self.Icr = np.zeros(ne)  # integrals of CR basis functions
        self.Ip1 = np.zeros(nv)
        for t, tri in enumerate(self.T):
            bary = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
            for q in bary:
                w = self.area[t] / 3.0
                self.Mp1[np.ix_(tri, tri)] += w * np.outer(q, q)
                self.Ip1[tri] += w * q
                for k in range(3):
                    self.Icr[self.local_edge[t, k]] += w * (1 - 2 * q[k])

        angle_sum = np.zeros(nv)
        for t, tri in enumerate(self.T):
            for k in range(3):
                a = self.X[tri[(k + 1) % 3]] - self.X[tri[k]]
                b = self.X[tri[(k + 2) % 3]] - self.X[tri[k]]
                angle_sum[tri[k]] += np.arccos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))
        defect = np.where(self.boundary_vertices, np.pi, 2 * np.pi) - angle_sum
        self.kappa = defect / self.Ip1

    # -- helpers ----------------------------------------------------------
    def ip(self, X, Y):
        return float(np.sum(self.Mx * X * Y))

    def K_rot(self):
        return self.Rp1.T @ (self.Mx[:, None] * self.Rp1)

    def K_cr(self):
        return self.Gcr.T @ (self.Mx[:, None] * self.Gcr)

    def elem_mean(self, f):
        return np.repeat(f[self.T].mean(axis=1), 3)

    def J(self, X):
        return self.Jm @ X

    def solve_constrained(self, A, b, fixed=None, weights=None, fixed_values=None):
        """Dense LU solve with Dirichlet dofs or a mean constraint."""
        n = len(b)
        if fixed is not None and np.any(fixed):
            free = np.flatnonzero(~fixed)
            x = np.zeros(n)
            if fixed_values is not None:
                x[fixed] = fixed_values[fixed]
            rhs = b[free] - A[np.ix_(free, np.flatnonzero(fixed))] @ x[fixed]
            x[free] = np.linalg.solve(A[np.ix_(free, free)], rhs)
            return x
        if weights is None:
            return np.linalg.solve(A, b)
        # project the load onto the range, bordered system for the mean
        b = b - weights * b.sum() / weights.sum()
        B = np.zeros((n + 1, n + 1))
        B[:n, :n] = A
        B[:n, n] = weights
        B[n, :n] = weights
        return np.linalg.solve(B, np.r_[b, 0.0])[:n]

    # -- scheme --------------------------------------------------------------
    def psi_solve(self, load):
        return self.solve_constrained(self.K_rot(), load, fixed=None if self.closed else self.boundary_vertices,
                                      weights=self.Ip1 if self.closed else None)

    def omega_from_velocity(self, V):
        return np.linalg.solve(self.Mp1, self.Rp1.T @ (self.Mx * V))

    def velocity(self, psi, h, H):
        return self.Rp1 @ psi + (H.T @ h if len(h) else 0.0)

    def ns_step(self, psi, h, omega, H, nu, dt, F, kappa=None):
        kappa = self.kappa if kappa is None else kappa
        V = self.velocity(psi, h, H)
        G = F - self.elem_mean(omega) * self.J(V) - nu * (self.Rp1 @ omega) + 2 * nu * self.elem_mean(kappa) * V
        load = self.Mp1 @ omega + dt * self.Rp1.T @ (self.Mx * G)
        psi1 = self.psi_solve(load)
        h1 = h + dt * np.array([self.ip(G, Hi) for Hi in H])
        V1 = self.velocity(psi1, h1, H)
        return psi1, h1, self.omega_from_velocity(V1)

    def euler_step(self, psi, h, omega, H, dt, F):
        V = self.velocity(psi, h, H)
        adv = np.einsum("ti,ti->t", V.reshape(-1, 3), (self.Gp1 @ omega).reshape(-1, 3))
        adv_load = np.zeros(self.nv)
        for t, tri in enumerate(self.T):
            adv_load[tri] += adv[t] * self.area[t] / 3.0
        load = self.Mp1 @ omega + dt * (self.Rp1.T @ (self.Mx * F) - adv_load)
        omega1 = np.linalg.solve(self.Mp1, load)
        Z = F - self.elem_mean(omega) * self.J(V)
        h1 = h + dt * np.array([self.ip(Z, Hi) for Hi in H])
        psi1 = self.psi_solve(self.Mp1 @ omega1)
        return psi1, h1, omega1

    def pressure(self, psi, h, omega, H, nu, F, kappa=None):
        kappa = self.kappa if kappa is None else kappa
        V = self.velocity(psi, h, H)
        G = F - self.elem_mean(omega) * self.J(V) - nu * (self.Rp1 @ omega) + 2 * nu * self.elem_mean(kappa) * V
        return self.solve_constrained(self.K_cr(), self.Gcr.T @ (self.Mx * G), weights=self.Icr)

    def harmonic_rank(self):
        """``dim X_h - rank[grad_h(CR) | rot_h(S)]`` by SVD."""
        cols = [self.Gcr]
        free = ~self.boundary_vertices if not self.closed else np.ones(self.nv, dtype=bool)
        cols.append(self.Rp1[:, free])
        A = np.sqrt(self.Mx)[:, None] * np.hstack(cols)
        s = np.linalg.svd(A, compute_uv=False)
        rank = int(np.sum(s > 1e-9 * s[0]))
        return 2 * self.nt - rank

    def harmonic_space(self):
        """Orthonormal (mass-weighted) basis of the complement, by SVD."""
        free = ~self.boundary_vertices if not self.closed else np.ones(self.nv, dtype=bool)
        A = np.hstack([self.Gcr, self.Rp1[:, free]])
        # tangential fields: two per element
        basis = []
        for t in range(self.nt):
            n = self.normal[t]
            e = np.linalg.svd(n[None, :])[2][1:]  # two tangent vectors
            for v in e:
                x = np.zeros(3 * self.nt)
                x[3 * t : 3 * t + 3] = v
                basis.append(x)
        Tm = np.array(basis).T
        W = np.sqrt(self.Mx)[:, None]
        C = (W * A).T @ (W * Tm)  # conditions: (X, grad q) = (X, rot phi) = 0
        _, s, vt = np.linalg.svd(C)
        rank = int(np.sum(s > 1e-9 * s[0]))
        null = vt[rank:].T
        return Tm @ null
