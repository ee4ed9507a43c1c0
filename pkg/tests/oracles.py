"""Independent oracles working on acceptance counts only.

Each rule-1 trial on archive entry k is an independent Bernoulli(lambda_k)
(old rows are i.i.d. draws from the old pdf) and each rule-2 trial an
independent Bernoulli(1 - lambda_k), so the bookkeeping of the mixing
schedules can be replayed without any Gaussian machinery.
"""

import numpy as np


def expected_reuse_fraction(lam: float, n: int) -> float:
    """Exact E[reused] / n for the alternating single-archive schedule (dynamic programming)."""
    prob = np.zeros((n + 1, n + 1))
    prob[0, 0] = 1.0
    expected = 0.0
    moves = [(da, db, (lam if da else 1 - lam) * ((1 - lam) if db else lam))
             for da in (0, 1) for db in (0, 1)]
    for _ in range(n):
        nxt = np.zeros_like(prob)
        for a in range(n):
            for b in range(n - a):
                p = prob[a, b]
                if p == 0.0:
                    continue
                for da, db, w in moves:
                    na, nb = a + da, b + db
                    if na + nb == n:
                        expected += p * w * na
                    elif na + nb == n + 1:
                        expected += p * w * (na - na / (n + 1))
                    else:
                        nxt[na, nb] += p * w
        prob = nxt
    expected += float(np.sum(prob * np.arange(n + 1)[:, None]))
    return expected / n


def simulate_extended_counts(lams, n: int, reps: int, seed: int):
    """Monte Carlo of the archive schedule; returns mean (reused_im, reused_eim, fresh) / n."""
    rng = np.random.default_rng(seed)
    tot = np.zeros(3)
    for _ in range(reps):
        by_entry = np.zeros(len(lams) + 1)  # index 0: fresh
        size = 0
        for k, lam in enumerate(lams, start=1):
            a = (rng.random(n) < lam).astype(int)
            b = (rng.random(n) < 1 - lam).astype(int)
            for i in range(n):
                by_entry[k] += a[i]
                by_entry[0] += b[i]
                size += a[i] + b[i]
                if size >= n:
                    break
            if size >= n:
                break
        if size > n:
            drop = rng.choice(len(by_entry), p=by_entry / by_entry.sum())
            by_entry[drop] -= 1
            size -= 1
        by_entry[0] += n - size
        tot += [by_entry[1], by_entry[2:].sum(), by_entry[0]]
    return tot / (reps * n)
