"""Batched Bloch-vector integrator, numpy implementation.

Fallback for the compiled extension module with the identical interface.
Evolves M independent samples of (K central replicas + J bath spins)
under the mean-field equations dR/dt = B x R with

  central rows i < K:  B_i = z * sb * 0.5 * sum_j A_j Rz_j
  bath rows j:         Bz_j = 0.5 * sum_k D_jk Rz_k + sb * 0.5 * A_j * Rz_back + hz_j
                       Bx_j = -0.25 * sum_k D_jk Rx_k   (and same for y)

where sb is the scaled system-bath prefactor and Rz_back the z-projection
of the designated back-action replica.  Central replicas never couple to
each other; they share the one bath, which is what makes recording a
whole echo curve from a single bath trajectory possible.

All heavy lifting is BLAS matrix products over the (J, M) component
blocks, so this "pure Python" path is reasonably fast for large M; the
compiled kernel wins on small batches and fuses the elementwise work.
"""

import numpy as np

from .errors import NumericalError


def evolve(
    state,            # (3, N, M) float64, C-contiguous, modified in place
    n_central,        # K: rows [0, K) are central replicas, [K, N) the bath
    backaction_row,   # replica index driving the bath back-action, -1 = none
    A,                # (J,) central-spin couplings
    D,                # (J, J) intra-bath couplings, zero diagonal
    hz,               # (J, M) static per-sample z offsets on bath spins
    sb_scale,         # system-bath field scale (sign convention included)
    dt,
    n_steps,
    pulse_steps,      # (P,) int64 sorted; events fire after completing that step
    pulse_rows,       # (P,) central row each pulse acts on
    pulse_mats,       # (P, 3, 3) rotation matrices
    record_steps,     # (Q,) int64 sorted
    record_rows,      # (Q,) row recorded at each step
    out_x,            # (Q, M)
    out_y,            # (Q, M)
    field_steps=None, # (Qf,) int64 sorted; record the central-spin field
    out_field=None,   # (Qf, M)
    renormalize=True,
):
    three, N, M = state.shape
    assert three == 3
    K = int(n_central)
    J = N - K
    if field_steps is None:
        field_steps = np.empty(0, dtype=np.int64)

    B = np.zeros((3, N, M))
    Y0 = np.empty_like(state)
    KV = np.empty_like(state)
    ACC = np.empty_like(state)
    scratch = np.empty((N, M))
    scratch2 = np.empty((N, M))
    tmp_jm = np.empty((J, M))
    f0 = np.empty(M)

    bx, by, bz = B[0], B[1], B[2]
    ba = int(backaction_row)
    half_sb = 0.5 * sb_scale
    a_scaled = half_sb * A  # pre-rounded once, as in the compiled kernel

    def fields(y):
        yx, yy, yz = y[0], y[1], y[2]
        if J:
            np.dot(D, yx[K:], out=bx[K:])
            bx[K:] *= -0.25
            np.dot(D, yy[K:], out=by[K:])
            by[K:] *= -0.25
            np.dot(D, yz[K:], out=bz[K:])
            bz[K:] *= 0.5
            if ba >= 0:
                np.multiply(a_scaled[:, None], yz[ba][None, :], out=tmp_jm)
                bz[K:] += tmp_jm
            bz[K:] += hz
            np.dot(A, yz[K:], out=f0)
            np.multiply(f0, half_sb, out=f0)
        else:
            f0[:] = 0.0
        if K:
            bz[:K] = f0[None, :]

    def cross_into(y, out):
        # out = B x y, elementwise over all rows
        np.multiply(by, y[2], out=out[0])
        np.multiply(bz, y[1], out=scratch)
        out[0] -= scratch
        np.multiply(bz, y[0], out=out[1])
        np.multiply(bx, y[2], out=scratch)
        out[1] -= scratch
        np.multiply(bx, y[1], out=out[2])
        np.multiply(by, y[0], out=scratch)
        out[2] -= scratch

    def stage(coeff):
        # state <- Y0 + coeff * KV
        np.multiply(KV, coeff, out=state)
        np.add(state, Y0, out=state)

    def apply_pulse(p):
        row = int(pulse_rows[p])
        state[:, row, :] = pulse_mats[p] @ state[:, row, :]

    def record(q):
        out_x[q] = state[0, int(record_rows[q])]
        out_y[q] = state[1, int(record_rows[q])]

    def record_field(qf):
        if J:
            np.dot(A, state[2, K:], out=f0)
            np.multiply(f0, half_sb, out=f0)
            out_field[qf] = f0
        else:
            out_field[qf] = 0.0

    p = q = qf = 0
    P, Q, Qf = len(pulse_steps), len(record_steps), len(field_steps)
    while p < P and pulse_steps[p] == 0:
        apply_pulse(p)
        p += 1
    while q < Q and record_steps[q] == 0:
        record(q)
        q += 1
    while qf < Qf and field_steps[qf] == 0:
        record_field(qf)
        qf += 1

    for step in range(1, n_steps + 1):
        Y0[:] = state
        fields(state)
        cross_into(state, KV)          # k1
        ACC[:] = KV
        stage(0.5 * dt)
        fields(state)
        cross_into(state, KV)          # k2
        stage(0.5 * dt)
        KV *= 2.0
        ACC += KV
        fields(state)
        cross_into(state, KV)          # k3
        stage(dt)
        KV *= 2.0
        ACC += KV
        fields(state)
        cross_into(state, KV)          # k4
        ACC += KV
        np.multiply(ACC, dt / 6.0, out=state)
        state += Y0

        if renormalize:
            np.multiply(state[0], state[0], out=scratch)
            np.multiply(state[1], state[1], out=scratch2)
            scratch += scratch2
            np.multiply(state[2], state[2], out=scratch2)
            scratch += scratch2
            mn = scratch.min()
            if not (mn > 0.0 and np.isfinite(scratch.max())):
                raise NumericalError(
                    f"non-finite or zero spin norm at step {step} "
                    "(coincident spins or unstable step size?)"
                )
            np.sqrt(scratch, out=scratch)
            np.reciprocal(scratch, out=scratch)
            state[0] *= scratch
            state[1] *= scratch
            state[2] *= scratch

        while p < P and pulse_steps[p] == step:
            apply_pulse(p)
            p += 1
        while q < Q and record_steps[q] == step:
            record(q)
            q += 1
        while qf < Qf and field_steps[qf] == step:
            record_field(qf)
            qf += 1
