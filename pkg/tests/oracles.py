"""Independent numerical oracles used by the test suite.

The main one is a P1 finite-element eigensolver for the star-graph
operator -y'' + q y with the Kirchhoff node condition sum_j y_j'(0) = h y(0)
and Neumann or Dirichlet far ends. The Kirchhoff condition is natural in
the weak form (it only adds h y(0)^2 to the stiffness quadratic form), so
no one-sided stencils are involved; the solver shares no code with the
transfer-matrix propagation under test.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from reflectkit.line_model import BoundarySetting


def _cellwise_q(branch, x):
    """Potential at points x under the piecewise-constant cell model."""
    cells = branch.q_cells()
    idx = np.minimum((x / branch.dx).astype(int), cells.size - 1)
    return cells[idx]


def fd_star_eigenvalues(network, setting, n_per_branch=2000, k=20):
    """First k eigenvalues mu of the star-graph operator, ascending.

    Piecewise-linear finite elements with n_per_branch elements per branch;
    K y = mu M y solved by shift-invert Lanczos around zero. The potential
    enters element-wise with the same piecewise-constant cell values the
    propagation code uses, so discretization is the only difference.
    """
    branches = network.branches
    neumann = setting is BoundarySetting.NEUMANN

    # align element boundaries with the piecewise-constant q cells so the
    # potential quadrature is exact (cells divide the element count)
    counts = []
    for b in branches:
        ncell = b.q_cells().size
        counts.append(int(np.ceil(n_per_branch / ncell)) * ncell)

    # unknowns: shared node value y0 at index 0, then per branch the nodes
    # x_1 .. x_m (m = counts[j] for Neumann, counts[j] - 1 for Dirichlet
    # where the far endpoint is pinned to zero)
    sizes = [n if neumann else n - 1 for n in counts]
    offsets = np.concatenate(([1], 1 + np.cumsum(sizes)))
    n_tot = int(offsets[-1])

    rk, ck, vk = [], [], []   # stiffness triplets
    rm, cm, vm = [], [], []   # mass triplets

    def add(tr, tc, tv, r, c, v):
        tr.append(r)
        tc.append(c)
        tv.append(v)

    # node coupling term h * y(0)^2
    add(rk, ck, vk, 0, 0, network.coupling_h)

    for j, b in enumerate(branches):
        n_el = counts[j]
        h = b.tau / n_el
        base = offsets[j]

        def gidx(i):
            # global index of branch node x_i; x_0 is the shared node
            return 0 if i == 0 else base + i - 1

        mids = (0.5 + np.arange(n_el)) * h
        qe = _cellwise_q(b, mids)
        for e in range(n_el):
            a, c = gidx(e), gidx(e + 1)
            drop_c = (not neumann) and e == n_el - 1
            ke = 1.0 / h
            me = h / 6.0
            # mass blended 50/50 between consistent [2,1;1,2] h/6 and
            # lumped [3,0;0,3] h/6: cancels the leading dispersion error
            add(rk, ck, vk, a, a, ke + qe[e] * 2.0 * me)
            add(rm, cm, vm, a, a, 2.5 * me)
            if not drop_c:
                add(rk, ck, vk, c, c, ke + qe[e] * 2.0 * me)
                add(rk, ck, vk, a, c, -ke + qe[e] * me)
                add(rk, ck, vk, c, a, -ke + qe[e] * me)
                add(rm, cm, vm, c, c, 2.5 * me)
                add(rm, cm, vm, a, c, 0.5 * me)
                add(rm, cm, vm, c, a, 0.5 * me)

    kmat = sp.csr_matrix((vk, (rk, ck)), shape=(n_tot, n_tot))
    mmat = sp.csr_matrix((vm, (rm, cm)), shape=(n_tot, n_tot))
    mu = spla.eigsh(kmat, k=k, M=mmat, sigma=-1.0, which="LM",
                    return_eigenvectors=False)
    return np.sort(mu)


def fd_star_frequencies(network, setting, n_per_branch=2000, k=20):
    """Positive frequencies lambda = sqrt(mu) of the FE oracle, ascending."""
    mu = fd_star_eigenvalues(network, setting, n_per_branch, k + 4)
    pos = mu[mu > 1e-8]
    return np.sqrt(pos)[:k]


def random_network(rng, n_branches, tau_range=(0.5, 3.0), q_max=0.5,
                   h_range=(-0.5, 0.5), n_samples=33, zc0=50.0):
    """Random homogeneous-impedance star with bounded sampled potentials."""
    from reflectkit.line_model import BranchSpec, make_network

    branches = []
    for _ in range(n_branches):
        tau = rng.uniform(*tau_range)
        # random smooth potential: few low sine/cosine modes, clipped scale
        x = np.linspace(0.0, 1.0, n_samples)
        q = np.zeros(n_samples)
        for mode in range(1, 4):
            q += rng.uniform(-1.0, 1.0) * np.sin(np.pi * mode * x)
            q += rng.uniform(-1.0, 1.0) * np.cos(np.pi * mode * x)
        peak = np.abs(q).max()
        if peak > 0:
            q *= rng.uniform(0.2, 1.0) * q_max / peak
        branches.append(BranchSpec(tau=tau, q=q, zc_at_node=zc0,
                                   zc_slope_at_node=0.0))
    h = rng.uniform(*h_range)
    return make_network(branches, zc0, coupling_h=h)
