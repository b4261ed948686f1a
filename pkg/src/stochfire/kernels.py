"""Synchronous update kernels for the fire automaton.

Two implementations of the same update live here: a per-cell loop compiled
with numba and a whole-grid numpy version. They agree bit for bit; float
accumulation happens in the same order in both (neighbour offsets scanned
row-major, radiation added after conduction).
"""
import numpy as np

from ._accel import njit, use_numba
from .rng import next_uniform

NO_TREE = 0
TREE = 1
FIRE = 2
EMBER = 3
DEAD = 4


@njit
def _step_jit(states, heat, out_states, out_heat, alpha, radius, q_threshold,
              q_die, q_dead, p_ignite, reset_failed, rng_state):
    H, W = states.shape
    for i in range(H):
        for j in range(W):
            s = states[i, j]
            h = heat[i, j]
            out_states[i, j] = s
            if s == TREE:
                acc = 0.0
                for di in range(-radius, radius + 1):
                    ni = i + di
                    if ni < 0 or ni >= H:
                        continue
                    for dj in range(-radius, radius + 1):
                        nj = j + dj
                        if (di == 0 and dj == 0) or nj < 0 or nj >= W:
                            continue
                        if states[ni, nj] == FIRE:
                            acc += heat[ni, nj]
                n_emb = 0
                for di in range(-1, 2):
                    ni = i + di
                    if ni < 0 or ni >= H:
                        continue
                    for dj in range(-1, 2):
                        nj = j + dj
                        if (di == 0 and dj == 0) or nj < 0 or nj >= W:
                            continue
                        if states[ni, nj] == EMBER and heat[ni, nj] >= q_dead:
                            n_emb += 1
                out_heat[i, j] = (h + alpha * acc) + n_emb * q_die
            elif s == EMBER:
                if h >= q_dead:
                    n_rec = 0
                    for di in range(-1, 2):
                        ni = i + di
                        if ni < 0 or ni >= H:
                            continue
                        for dj in range(-1, 2):
                            nj = j + dj
                            if (di == 0 and dj == 0) or nj < 0 or nj >= W:
                                continue
                            if states[ni, nj] != FIRE:
                                n_rec += 1
                    if n_rec < 1:
                        n_rec = 1
                    h = h - n_rec * q_die
                    if h < 0.0:
                        h = 0.0
                out_heat[i, j] = h
                if h < q_dead:
                    out_states[i, j] = DEAD
            elif s == FIRE:
                out_heat[i, j] = h
                out_states[i, j] = EMBER
            else:
                out_heat[i, j] = h
    # ignition draws in row-major order over the candidates
    for i in range(H):
        for j in range(W):
            if states[i, j] == TREE and out_heat[i, j] > q_threshold:
                rng_state, u = next_uniform(rng_state)
                if u < p_ignite:
                    out_states[i, j] = FIRE
                elif reset_failed:
                    out_heat[i, j] = 0.0
    return rng_state


@njit
def _is_active_jit(states, heat, q_threshold):
    H, W = states.shape
    for i in range(H):
        for j in range(W):
            s = states[i, j]
            if s == FIRE or s == EMBER:
                return True
            if s == TREE and heat[i, j] > q_threshold:
                return True
    return False


@njit
def _simulate_jit(states0, heat0, out_states, out_heat, keep_heat, alpha, radius,
                  q_threshold, q_die, q_dead, p_ignite, reset_failed, rng_state):
    n_frames = out_states.shape[0]
    out_states[0] = states0
    cur_s = states0.copy()
    cur_h = heat0.copy()
    nxt_s = np.empty_like(cur_s)
    nxt_h = np.empty_like(cur_h)
    if keep_heat:
        out_heat[0] = cur_h
    if not _is_active_jit(cur_s, cur_h, q_threshold):
        return 1, True, rng_state
    for t in range(1, n_frames):
        rng_state = _step_jit(cur_s, cur_h, nxt_s, nxt_h, alpha, radius, q_threshold,
                              q_die, q_dead, p_ignite, reset_failed, rng_state)
        out_states[t] = nxt_s
        if keep_heat:
            out_heat[t] = nxt_h
        cur_s, nxt_s = nxt_s, cur_s
        cur_h, nxt_h = nxt_h, cur_h
        if not _is_active_jit(cur_s, cur_h, q_threshold):
            return t + 1, True, rng_state
    return n_frames, False, rng_state


def _neighbour_count(mask, radius):
    H, W = mask.shape
    pad = np.pad(mask, radius)
    out = np.zeros((H, W), dtype=np.int64)
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            if di == 0 and dj == 0:
                continue
            out += pad[radius + di:radius + di + H, radius + dj:radius + dj + W]
    return out


def _neighbour_sum(values, radius):
    H, W = values.shape
    pad = np.pad(values, radius)
    out = np.zeros((H, W), dtype=np.float64)
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            if di == 0 and dj == 0:
                continue
            out += pad[radius + di:radius + di + H, radius + dj:radius + dj + W]
    return out


def _step_numpy(states, heat, alpha, radius, q_threshold, q_die, q_dead,
                p_ignite, reset_failed, rng):
    tree = states == TREE
    fire = states == FIRE
    ember = states == EMBER
    active_ember = ember & (heat >= q_dead)

    conduct = _neighbour_sum(np.where(fire, heat, 0.0), radius)
    n_emb = _neighbour_count(active_ember.astype(np.int64), 1)
    new_heat = heat.copy()
    new_heat[tree] = (heat[tree] + alpha * conduct[tree]) + n_emb[tree] * q_die

    # radiation recipients: in-bounds neighbours not on fire
    inb = _neighbour_count(np.ones(states.shape, dtype=np.int64), 1)
    n_rec = np.maximum(inb - _neighbour_count(fire.astype(np.int64), 1), 1)
    radiated = np.maximum(heat - n_rec * q_die, 0.0)
    new_heat[active_ember] = radiated[active_ember]

    new_states = states.copy()
    new_states[ember & (new_heat < q_dead)] = DEAD
    new_states[fire] = EMBER

    cand = np.flatnonzero(tree & (new_heat > q_threshold))
    if cand.size:
        u = rng.uniforms(cand.size)
        lit = u < p_ignite
        flat_s = new_states.reshape(-1)
        flat_s[cand[lit]] = FIRE
        if reset_failed:
            new_heat.reshape(-1)[cand[~lit]] = 0.0
    return new_states, new_heat


def _is_active_numpy(states, heat, q_threshold):
    return bool(np.any((states == FIRE) | (states == EMBER)
                       | ((states == TREE) & (heat > q_threshold))))


def step_arrays(states, heat, config, rng, accelerated=None):
    """One synchronous update; advances ``rng`` in place."""
    args = (float(config.alpha), int(config.radius), float(config.q_threshold),
            float(config.q_die), float(config.q_dead), float(config.p_ignite),
            config.failed_ignition == "reset")
    if use_numba(accelerated):
        out_s = np.empty_like(states)
        out_h = np.empty_like(heat)
        st = _step_jit(states, heat, out_s, out_h, *args, np.uint64(rng.state))
        rng.state = int(st)
        return out_s, out_h
    return _step_numpy(states, heat, *args, rng)


def simulate_arrays(states0, heat0, config, rng, n_frames, keep_heat=False, accelerated=None):
    """Run up to ``n_frames`` frames (frame 0 included).

    Returns ``(states, heat_or_None, n_used, terminated)`` where only the
    first ``n_used`` frames of ``states`` are meaningful.
    """
    H, W = states0.shape
    out_s = np.empty((n_frames, H, W), dtype=np.uint8)
    out_h = np.empty((n_frames if keep_heat else 1, H, W), dtype=np.float64)
    args = (float(config.alpha), int(config.radius), float(config.q_threshold),
            float(config.q_die), float(config.q_dead), float(config.p_ignite),
            config.failed_ignition == "reset")
    if use_numba(accelerated):
        n_used, done, st = _simulate_jit(states0, heat0, out_s, out_h, keep_heat, *args,
                                         np.uint64(rng.state))
        rng.state = int(st)
        return out_s, (out_h if keep_heat else None), int(n_used), bool(done)

    cur_s, cur_h = states0.copy(), heat0.copy()
    out_s[0] = cur_s
    if keep_heat:
        out_h[0] = cur_h
    if not _is_active_numpy(cur_s, cur_h, args[2]):
        return out_s, (out_h if keep_heat else None), 1, True
    for t in range(1, n_frames):
        cur_s, cur_h = _step_numpy(cur_s, cur_h, *args, rng)
        out_s[t] = cur_s
        if keep_heat:
            out_h[t] = cur_h
        if not _is_active_numpy(cur_s, cur_h, args[2]):
            return out_s, (out_h if keep_heat else None), t + 1, True
    return out_s, (out_h if keep_heat else None), n_frames, False


__all__ = ["NO_TREE", "TREE", "FIRE", "EMBER", "DEAD", "step_arrays", "simulate_arrays"]
