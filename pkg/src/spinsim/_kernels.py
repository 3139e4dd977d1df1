"""Compiled hot loops: per-path random streams and Euler-Maruyama ensembles.

Random stream contract
----------------------
Each path owns an independent uint64 stream: Philox4x32-10 with the run
seed as the 64-bit key and the 128-bit counter split as (block index,
path index).  Standard normals are produced from that stream by a
256-strip ziggurat in fixed blocks of NBLOCK values: every slot of a
block consumes one uint64; slots that fail the fast acceptance test are
resolved in slot order, drawing further uint64s from the same stream
(one per wedge test, two per tail attempt, then a fresh candidate on a
wedge reject).  The normal sequence of a path therefore depends only on
(base_seed, path_index), never on thread scheduling or on how consumers
chunk their reads.  A step of the integrator consumes three consecutive
normals.

Everything in this module is deliberately scalar-state, float64 and
allocation-light; the ziggurat fast pass and the Philox fill are written
branch-free so LLVM can vectorize them.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

UBUF = 8192  # uint64 working buffer per path
NBLOCK = 4096  # normals per ziggurat block
ZIG_R = 3.6541528853610088  # base strip boundary for 256 strips

_U64_1 = nb.uint64(1)


def _zig_tables():
    # Strip widths x[1] > x[2] > ... > x[256] = 0 chosen so every strip,
    # and the base rectangle plus tail, has equal area v.
    f = lambda x: math.exp(-0.5 * x * x)
    r = ZIG_R
    v = r * f(r) + math.sqrt(math.pi / 2.0) * math.erfc(r / math.sqrt(2.0))
    x = np.empty(257)
    x[0] = v / f(r)  # virtual width of the base region
    x[1] = r
    for i in range(2, 256):
        x[i] = math.sqrt(-2.0 * math.log(f(x[i - 1]) + v / x[i - 1]))
    x[256] = 0.0
    ki = np.empty(256, np.uint64)
    wi = np.empty(256)
    fi = np.empty(257)
    for i in range(256):
        ki[i] = np.uint64(math.floor(2.0**52 * x[i + 1] / x[i]))
        wi[i] = x[i] * 2.0**-52
        fi[i] = f(x[i])
    fi[256] = 1.0
    closure = x[255] * (1.0 - f(x[255])) - v
    for arr in (ki, wi, fi):
        arr.flags.writeable = False
    return ki, wi, fi, v, closure


ZIG_KI, ZIG_WI, ZIG_FI, ZIG_V, ZIG_CLOSURE = _zig_tables()
RNG_ID = "philox4x32-10/ziggurat256"


@nb.njit(nb.types.UniTuple(nb.uint32, 4)(nb.uint32, nb.uint32, nb.uint32, nb.uint32, nb.uint32, nb.uint32), inline="always", cache=True)
def _philox_round10(c0, c1, c2, c3, k0, k1):
    x0, x1, x2, x3 = c0, c1, c2, c3
    for _ in range(10):
        p0 = nb.uint64(0xD2511F53) * nb.uint64(x0)
        p1 = nb.uint64(0xCD9E8D57) * nb.uint64(x2)
        h0 = nb.uint32(p0 >> nb.uint64(32))
        l0 = nb.uint32(p0 & nb.uint64(0xFFFFFFFF))
        h1 = nb.uint32(p1 >> nb.uint64(32))
        l1 = nb.uint32(p1 & nb.uint64(0xFFFFFFFF))
        x0 = h1 ^ x1 ^ k0
        x1 = l1
        x2 = h0 ^ x3 ^ k1
        x3 = l0
        k0 = nb.uint32(k0 + nb.uint32(0x9E3779B9))
        k1 = nb.uint32(k1 + nb.uint32(0xBB67AE85))
    return x0, x1, x2, x3


@nb.njit(cache=True, nogil=True)
def philox_block(block: np.uint64, path: np.uint64, key: np.uint64):
    """One counter block -> two uint64 outputs (known-answer testable)."""
    x0, x1, x2, x3 = _philox_round10(
        nb.uint32(block & nb.uint64(0xFFFFFFFF)),
        nb.uint32(block >> nb.uint64(32)),
        nb.uint32(path & nb.uint64(0xFFFFFFFF)),
        nb.uint32(path >> nb.uint64(32)),
        nb.uint32(key & nb.uint64(0xFFFFFFFF)),
        nb.uint32(key >> nb.uint64(32)),
    )
    return (
        nb.uint64(x0) | (nb.uint64(x1) << nb.uint64(32)),
        nb.uint64(x2) | (nb.uint64(x3) << nb.uint64(32)),
    )


@nb.njit(cache=True, nogil=True)
def _philox_fill(out, lo, hi, blk0, path, key):
    """Fill out[lo:hi] (even length) from consecutive counter blocks."""
    k0 = nb.uint32(key & nb.uint64(0xFFFFFFFF))
    k1 = nb.uint32(key >> nb.uint64(32))
    c2 = nb.uint32(path & nb.uint64(0xFFFFFFFF))
    c3 = nb.uint32(path >> nb.uint64(32))
    nblk = (hi - lo) // 2
    for i in range(nblk):
        ctr = blk0 + nb.uint64(i)
        x0, x1, x2, x3 = _philox_round10(
            nb.uint32(ctr & nb.uint64(0xFFFFFFFF)),
            nb.uint32(ctr >> nb.uint64(32)),
            c2,
            c3,
            k0,
            k1,
        )
        out[lo + 2 * i] = nb.uint64(x0) | (nb.uint64(x1) << nb.uint64(32))
        out[lo + 2 * i + 1] = nb.uint64(x2) | (nb.uint64(x3) << nb.uint64(32))
    return blk0 + nb.uint64(nblk)


@nb.njit(cache=True, nogil=True)
def _refill(ubuf, upos, ulen, blk, path, key):
    """Compact leftovers to the front and top the buffer up."""
    left = ulen - upos
    for i in range(left):
        ubuf[i] = ubuf[upos + i]
    n = (UBUF - left) & ~1  # whole Philox blocks only
    blk = _philox_fill(ubuf, left, left + n, blk, path, key)
    return 0, left + n, blk


@nb.njit(nb.float64(nb.uint64), inline="always", cache=True)
def _u01(u):
    # 53-bit uniform on (0, 1); never exactly 0, so logs are safe
    return (nb.float64(u >> nb.uint64(11)) + 0.5) * (2.0**-53)


@nb.njit(cache=True, nogil=True)
def _normals_block(zbuf, zoff, idxs, oks, ubuf, upos, ulen, blk, path, key):
    """Emit NBLOCK normals into zbuf[zoff:zoff+NBLOCK]; returns u-state.

    Pass 1 is branch-free over one uint64 per slot; pass 2 walks the few
    slots that missed the fast acceptance region.
    """
    if ulen - upos < NBLOCK:
        upos, ulen, blk = _refill(ubuf, upos, ulen, blk, path, key)
    lo = upos
    for j in range(NBLOCK):
        u = ubuf[lo + j]
        idx = nb.int64(u & nb.uint64(0xFF))
        s = 1.0 - 2.0 * nb.float64((u >> nb.uint64(8)) & _U64_1)
        rabs = (u >> nb.uint64(9)) & nb.uint64(0xFFFFFFFFFFFFF)
        zbuf[zoff + j] = s * (nb.float64(rabs) * ZIG_WI[idx])
        idxs[j] = nb.uint8(idx)
        oks[j] = rabs < ZIG_KI[idx]
    upos = lo + NBLOCK
    for j in range(NBLOCK):
        if oks[j]:
            continue
        x = abs(zbuf[zoff + j])
        s = math.copysign(1.0, zbuf[zoff + j])
        idx = nb.int64(idxs[j])
        while True:
            if ulen - upos < 4:
                upos, ulen, blk = _refill(ubuf, upos, ulen, blk, path, key)
            if idx == 0:
                # exact tail sample beyond ZIG_R
                xx = -math.log(_u01(ubuf[upos])) / ZIG_R
                yy = -math.log(_u01(ubuf[upos + 1]))
                upos += 2
                if yy + yy > xx * xx:
                    zbuf[zoff + j] = s * (ZIG_R + xx)
                    break
            else:
                y = ZIG_FI[idx] + _u01(ubuf[upos]) * (ZIG_FI[idx + 1] - ZIG_FI[idx])
                upos += 1
                if y < math.exp(-0.5 * x * x):
                    zbuf[zoff + j] = s * x
                    break
                # wedge reject: fresh candidate from the stream
                u = ubuf[upos]
                upos += 1
                idx = nb.int64(u & nb.uint64(0xFF))
                s = 1.0 - 2.0 * nb.float64((u >> nb.uint64(8)) & _U64_1)
                rabs = (u >> nb.uint64(9)) & nb.uint64(0xFFFFFFFFFFFFF)
                x = nb.float64(rabs) * ZIG_WI[idx]
                if rabs < ZIG_KI[idx]:
                    zbuf[zoff + j] = s * x
                    break
    return upos, ulen, blk


@nb.njit(cache=True, nogil=True)
def stream_normals(n, base_seed, path_index):
    """First n normals of a path's stream (test/reference entry point)."""
    nblocks = (n + NBLOCK - 1) // NBLOCK
    out = np.empty(nblocks * NBLOCK)
    idxs = np.empty(NBLOCK, np.uint8)
    oks = np.empty(NBLOCK, np.uint8)
    ubuf = np.empty(UBUF, np.uint64)
    upos, ulen, blk = 0, 0, nb.uint64(0)
    for ib in range(nblocks):
        upos, ulen, blk = _normals_block(
            out, ib * NBLOCK, idxs, oks, ubuf, upos, ulen, blk, path_index, base_seed
        )
    return out[:n]


@nb.njit(cache=True, nogil=True)
def sim_mu_ensemble(
    mu0,
    bhat,
    alpha,
    c0,
    cb,
    cw,
    stride,
    base_seed,
    path0,
    n_paths,
    obs,
    mu_out,
    want_mu,
    flags,
):
    """Euler-Maruyama on the sphere for a block of paths.

    Per step k the update is
        u   = cb[k] * bhat + cw[k] * z           (field + noise input)
        mu' = normalize((1 - c0[k]) * mu + A(mu) u)
    which covers the autonomous, Stratonovich and hysteresis variants
    through the choice of the per-step coefficient arrays.  Records
    mu.bhat (and optionally mu) after steps stride, 2*stride, ...
    flags[p] = 0 on success, or the 1-based failing step.
    """
    n_steps = c0.shape[0]
    bx, by, bz = bhat[0], bhat[1], bhat[2]
    for p in range(n_paths):
        path = nb.uint64(path0 + nb.uint64(p))
        ubuf = np.empty(UBUF, np.uint64)
        zbuf = np.empty(NBLOCK + 2)
        idxs = np.empty(NBLOCK, np.uint8)
        oks = np.empty(NBLOCK, np.uint8)
        upos, ulen, blk = 0, 0, nb.uint64(0)
        zpos, zend = 0, 0
        mx, my, mz = mu0[0], mu0[1], mu0[2]
        irec = 0
        countdown = stride
        failed_at = 0
        for k in range(n_steps):
            if zend - zpos < 3:
                carry = zend - zpos
                for i in range(carry):
                    zbuf[i] = zbuf[zpos + i]
                upos, ulen, blk = _normals_block(
                    zbuf, carry, idxs, oks, ubuf, upos, ulen, blk, path, base_seed
                )
                zpos, zend = 0, carry + NBLOCK
            z1 = zbuf[zpos]
            z2 = zbuf[zpos + 1]
            z3 = zbuf[zpos + 2]
            zpos += 3
            ux = cb[k] * bx + cw[k] * z1
            uy = cb[k] * by + cw[k] * z2
            uz = cb[k] * bz + cw[k] * z3
            mdu = mx * ux + my * uy + mz * uz
            ax = alpha * (ux - mx * mdu) - (my * uz - mz * uy)
            ay = alpha * (uy - my * mdu) - (mz * ux - mx * uz)
            az = alpha * (uz - mz * mdu) - (mx * uy - my * ux)
            g = 1.0 - c0[k]
            px = g * mx + ax
            py = g * my + ay
            pz = g * mz + az
            nn = math.sqrt(px * px + py * py + pz * pz)
            if not (nn > 0.0 and nn < np.inf):
                failed_at = k + 1
                break
            inv = 1.0 / nn
            mx = px * inv
            my = py * inv
            mz = pz * inv
            countdown -= 1
            if countdown == 0:
                obs[p, irec] = mx * bx + my * by + mz * bz
                if want_mu:
                    mu_out[p, irec, 0] = mx
                    mu_out[p, irec, 1] = my
                    mu_out[p, irec, 2] = mz
                irec += 1
                countdown = stride
        flags[p] = failed_at
        if failed_at != 0:
            for i in range(irec, obs.shape[1]):
                obs[p, i] = np.nan


@nb.njit(cache=True, nogil=True)
def sim_coupled_ensemble(
    y0,
    b,
    alpha,
    eps,
    dt,
    n_steps,
    stride,
    base_seed,
    path0,
    n_paths,
    obs_y2,
    obs_mdb,
    flags,
):
    """Coupled-system Euler-Maruyama: y evolves, mu is read as y/|y|.

    y is never rescaled; its squared norm is one of the recorded
    observables.  Records |y|^2 and mu.b after steps stride, 2*stride...
    """
    bx, by, bz = b[0], b[1], b[2]
    bn = math.sqrt(bx * bx + by * by + bz * bz)
    sqdt = math.sqrt(dt)
    for p in range(n_paths):
        path = nb.uint64(path0 + nb.uint64(p))
        ubuf = np.empty(UBUF, np.uint64)
        zbuf = np.empty(NBLOCK + 2)
        idxs = np.empty(NBLOCK, np.uint8)
        oks = np.empty(NBLOCK, np.uint8)
        upos, ulen, blk = 0, 0, nb.uint64(0)
        zpos, zend = 0, 0
        yx, yy_, yz = y0[0], y0[1], y0[2]
        irec = 0
        countdown = stride
        failed_at = 0
        for k in range(n_steps):
            if zend - zpos < 3:
                carry = zend - zpos
                for i in range(carry):
                    zbuf[i] = zbuf[zpos + i]
                upos, ulen, blk = _normals_block(
                    zbuf, carry, idxs, oks, ubuf, upos, ulen, blk, path, base_seed
                )
                zpos, zend = 0, carry + NBLOCK
            z1 = zbuf[zpos]
            z2 = zbuf[zpos + 1]
            z3 = zbuf[zpos + 2]
            zpos += 3
            yn = math.sqrt(yx * yx + yy_ * yy_ + yz * yz)
            if not (yn > 0.0 and yn < np.inf):
                failed_at = k + 1
                break
            inv = 1.0 / yn
            mx = yx * inv
            my = yy_ * inv
            mz = yz * inv
            ux = bx * dt + eps * sqdt * z1
            uy = by * dt + eps * sqdt * z2
            uz = bz * dt + eps * sqdt * z3
            mdu = mx * ux + my * uy + mz * uz
            yx += alpha * (ux - mx * mdu) - (my * uz - mz * uy)
            yy_ += alpha * (uy - my * mdu) - (mz * ux - mx * uz)
            yz += alpha * (uz - mz * mdu) - (mx * uy - my * ux)
            countdown -= 1
            if countdown == 0:
                y2 = yx * yx + yy_ * yy_ + yz * yz
                yn = math.sqrt(y2)
                obs_y2[p, irec] = y2
                obs_mdb[p, irec] = (yx * bx + yy_ * by + yz * bz) / (yn * bn)
                irec += 1
                countdown = stride
        flags[p] = failed_at
        if failed_at != 0:
            for i in range(irec, obs_y2.shape[1]):
                obs_y2[p, i] = np.nan
                obs_mdb[p, i] = np.nan


@nb.njit(cache=True, nogil=True)
def sim_hitting_ensemble(
    mu0,
    bhat,
    alpha,
    c0s,
    cbs,
    cws,
    delta,
    n_steps,
    base_seed,
    path0,
    n_paths,
    tau_steps,
):
    """Time-homogeneous run until mu.bhat <= delta; -1 when censored.

    Same stepping rule as sim_mu_ensemble with constant coefficients;
    tau_steps[p] is the 1-based step count of the first crossing.
    """
    bx, by, bz = bhat[0], bhat[1], bhat[2]
    for p in range(n_paths):
        path = nb.uint64(path0 + nb.uint64(p))
        ubuf = np.empty(UBUF, np.uint64)
        zbuf = np.empty(NBLOCK + 2)
        idxs = np.empty(NBLOCK, np.uint8)
        oks = np.empty(NBLOCK, np.uint8)
        upos, ulen, blk = 0, 0, nb.uint64(0)
        zpos, zend = 0, 0
        mx, my, mz = mu0[0], mu0[1], mu0[2]
        hit = nb.int64(-1)
        for k in range(n_steps):
            if zend - zpos < 3:
                carry = zend - zpos
                for i in range(carry):
                    zbuf[i] = zbuf[zpos + i]
                upos, ulen, blk = _normals_block(
                    zbuf, carry, idxs, oks, ubuf, upos, ulen, blk, path, base_seed
                )
                zpos, zend = 0, carry + NBLOCK
            z1 = zbuf[zpos]
            z2 = zbuf[zpos + 1]
            z3 = zbuf[zpos + 2]
            zpos += 3
            ux = cbs * bx + cws * z1
            uy = cbs * by + cws * z2
            uz = cbs * bz + cws * z3
            mdu = mx * ux + my * uy + mz * uz
            ax = alpha * (ux - mx * mdu) - (my * uz - mz * uy)
            ay = alpha * (uy - my * mdu) - (mz * ux - mx * uz)
            az = alpha * (uz - mz * mdu) - (mx * uy - my * ux)
            g = 1.0 - c0s
            px = g * mx + ax
            py = g * my + ay
            pz = g * mz + az
            nn = math.sqrt(px * px + py * py + pz * pz)
            if not (nn > 0.0 and nn < np.inf):
                hit = nb.int64(-2)  # integration failure, distinct from censoring
                break
            inv = 1.0 / nn
            mx = px * inv
            my = py * inv
            mz = pz * inv
            if mx * bx + my * by + mz * bz <= delta:
                hit = nb.int64(k + 1)
                break
        tau_steps[p] = hit
