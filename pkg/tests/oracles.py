"""Plain-loop reference implementations used to check the vectorised code.

Nothing here imports geoplih's numeric code; only parameter arrays and
graph index arrays are shared.
"""

import math

import numpy as np


def silu(v):
    if v >= 0:
        return v / (1.0 + math.exp(-v))
    e = math.exp(v)
    return v * e / (1.0 + e)


def leaky(v, slope=0.2):
    return v if v > 0 else slope * v


def linear_loop(x, w, b):
    out = [0.0] * w.shape[1]
    for o in range(w.shape[1]):
        acc = b[o]
        for i in range(w.shape[0]):
            acc += x[i] * w[i, o]
        out[o] = acc
    return out


def mlp_loop(params, prefix, x, n_layers, act=silu):
    h = [float(v) for v in x]
    for k in range(n_layers):
        h = linear_loop(h, params[f"{prefix}.{k}.weight"], params[f"{prefix}.{k}.bias"])
        if k < n_layers - 1:
            h = [act(v) for v in h]
    return h


def sqdist(a, b):
    return sum((a[c] - b[c]) ** 2 for c in range(3))


def segment_loop(values, seg, n, mode):
    values = np.asarray(values, dtype=float)
    out = np.zeros((n,) + values.shape[1:])
    for s in range(n):
        rows = [values[r] for r in range(len(seg)) if seg[r] == s]
        if not rows:
            continue
        if mode == "sum":
            acc = rows[0].copy()
            for r in rows[1:]:
                acc = acc + r
            out[s] = acc
        elif mode == "mean":
            acc = rows[0].copy()
            for r in rows[1:]:
                acc = acc + r
            out[s] = acc / len(rows)
        else:
            acc = rows[0].copy()
            for r in rows[1:]:
                acc = np.where(r > acc, r, acc)
            out[s] = acc
    return out


def softmax_loop(logits, seg, n):
    out = [0.0] * len(logits)
    for s in range(n):
        rows = [r for r in range(len(seg)) if seg[r] == s]
        if not rows:
            continue
        top = max(logits[r] for r in rows)
        z = sum(math.exp(logits[r] - top) for r in rows)
        for r in rows:
            out[r] = math.exp(logits[r] - top) / z
    return out


# model stages

def messages_loop(params, prefix, h, x, target, source):
    out = []
    for t, s in zip(target, source):
        inp = list(h[t]) + list(h[s]) + [sqdist(x[t], x[s])]
        out.append(mlp_loop(params, prefix + ".phi_e", inp, 3))
    return np.array(out).reshape(len(target), -1)


def aggregate_loop(params, prefix, messages, target, n):
    d = messages.shape[1]
    out = []
    for i in range(n):
        rows = [messages[e] for e in range(len(target)) if target[e] == i]
        s = [sum(r[c] for r in rows) for c in range(d)]
        m = [v / len(rows) if rows else 0.0 for v in s]
        mx = [max(r[c] for r in rows) if rows else 0.0 for c in range(d)]
        out.append(mlp_loop(params, prefix + ".phi_aggr", s + m + mx, 3))
    return np.array(out)


def coord_update_loop(params, prefix, x, messages, target, source):
    n = len(x)
    out = np.array(x, dtype=float)
    for i in range(n):
        edges = [e for e in range(len(target)) if target[e] == i]
        acc = [0.0, 0.0, 0.0]
        for e in edges:
            w = mlp_loop(params, prefix + ".phi_x", messages[e], 3)[0]
            j = source[e]
            for c in range(3):
                acc[c] += (x[i][c] - x[j][c]) * w
        scale = 1.0 / max(len(edges), 1)
        for c in range(3):
            out[i, c] = x[i][c] + scale * acc[c]
    return out


def attention_loop(params, prefix, h_q, h_k, x_q, x_k, th, slope=0.2):
    W = params[prefix + ".att.W0"]
    a = params[prefix + ".att.a0"][:, 0]
    dh = W.shape[1]

    def proj(v):
        return [sum(v[i] * W[i, o] for i in range(len(v))) for o in range(dh)]

    wk = [proj(h) for h in h_k]
    out = np.zeros((len(h_q), dh))
    for i in range(len(h_q)):
        wi = proj(h_q[i])
        nbrs = [j for j in range(len(h_k)) if math.sqrt(sqdist(x_q[i], x_k[j])) < th]
        if not nbrs:
            continue
        e = [leaky(sum(a[c] * wi[c] for c in range(dh)) + sum(a[dh + c] * wk[j][c] for c in range(dh)), slope)
             for j in nbrs]
        top = max(e)
        z = sum(math.exp(v - top) for v in e)
        for v, j in zip(e, nbrs):
            coef = math.exp(v - top) / z
            for c in range(dh):
                out[i, c] += coef * wk[j][c]
    return out


# metrics

def rmse_loop(p, y):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, y)) / len(p))


def mae_loop(p, y):
    return sum(abs(a - b) for a, b in zip(p, y)) / len(p)


def pearson_loop(p, y):
    n = len(p)
    mp, my = sum(p) / n, sum(y) / n
    num = sum((a - mp) * (b - my) for a, b in zip(p, y))
    sp = math.sqrt(sum((a - mp) ** 2 for a in p))
    sy = math.sqrt(sum((b - my) ** 2 for b in y))
    return num / (sp * sy)


def average_ranks(v):
    ranks = [0.0] * len(v)
    for i, a in enumerate(v):
        less = sum(1 for b in v if b < a)
        equal = sum(1 for b in v if b == a)
        ranks[i] = less + (equal + 1) / 2.0
    return ranks


def spearman_loop(p, y):
    return pearson_loop(average_ranks(p), average_ranks(y))
