"""Independent oracle for the frozen constants used by the test suite.

Plain Python + mpmath at 50 digits; nothing from ``fpl`` is imported. Run
``python tests/oracles/derive_values.py`` to regenerate the numbers that the
tests hard-code.
"""

import mpmath as mp

mp.mp.dps = 50


def sig(x):
    return 1 / (1 + mp.e ** (-x))


def dot(a, b):
    return mp.fsum(x * y for x, y in zip(a, b))


def step(p, qi, bi, qj, bj, lu, lp, ln):
    """One ascent direction for a triple, written out by hand."""
    x = (bi + dot(p, qi)) - (bj + dot(p, qj))
    s = 1 - sig(x)  # e^-x / (1 + e^-x)
    dp = [s * (a - b) - lu * c for a, b, c in zip(qi, qj, p)]
    dqi = [s * c - lp * a for a, c in zip(qi, p)]
    dbi = s - lp * bi
    dqj = [-s * c - ln * a for a, c in zip(qj, p)]
    dbj = -s - ln * bj
    return dp, dqi, dbi, dqj, dbj


def fmt(v):
    if isinstance(v, list):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    return mp.nstr(v, 17, min_fixed=-30, max_fixed=30)


def worked_single_step():
    a = mp.mpf("0.05")
    p, qi, qj = [mp.mpf("0.1")], [mp.mpf("0.2")], [mp.mpf("-0.1")]
    x = dot(p, qi) - dot(p, qj)
    s = 1 - sig(x)
    dp, dqi, dbi, dqj, dbj = step(p, qi, 0, qj, 0, 0, 0, 0)
    print("single step: x =", fmt(x), "s =", fmt(s))
    print("  p  ->", fmt(p[0] + a * dp[0]))
    print("  qi ->", fmt(qi[0] + a * dqi[0]), " bi ->", fmt(a * dbi))
    print("  qj ->", fmt(qj[0] + a * dqj[0]), " bj ->", fmt(a * dbj))


def f1_value():
    p, r = mp.mpf("0.07757"), mp.mpf("0.09581")
    print("f1(0.07757, 0.09581) =", fmt(2 * p * r / (p + r)))


def t_test_value():
    a = [mp.mpf(x) for x in ("0.1", "0.2", "0.3", "0.4")]
    b = [mp.mpf(x) for x in ("0.0", "0.1", "0.25", "0.35")]
    d = [x - y for x, y in zip(a, b)]
    n = len(d)
    mean = mp.fsum(d) / n
    sd_sample = mp.sqrt(mp.fsum((x - mean) ** 2 for x in d) / (n - 1))
    sd_pop = mp.sqrt(mp.fsum((x - mean) ** 2 for x in d) / n)
    df = n - 1

    def two_sided(t):
        # 2 * P(T > |t|) by numerical integration of the Student density
        c = mp.gamma((df + 1) / mp.mpf(2)) / (mp.sqrt(df * mp.pi) * mp.gamma(df / mp.mpf(2)))
        dens = lambda x: c * (1 + x * x / df) ** (-(df + 1) / mp.mpf(2))  # noqa: E731
        return 2 * mp.quad(dens, [abs(t), mp.inf])

    t = mean / (sd_sample / mp.sqrt(n))
    t_pop = mean / (sd_pop / mp.sqrt(n))
    print("t-test, n-1 sd: t =", fmt(t), "p =", fmt(two_sided(t)))
    print("t-test, n sd:   t =", fmt(t_pop), "p =", fmt(two_sided(t_pop)))


def three_user_round():
    # catalog of 2 items, F = 2; user positives {0}, {1}, {0} force the triples
    # (0,1), (1,0), (0,1). Every client sees the same pre-round snapshot.
    a = mp.mpf("0.1")
    lu = lp = a / 20
    ln = a / 200
    Q = [[mp.mpf("0.3"), mp.mpf("-0.2")], [mp.mpf("-0.1"), mp.mpf("0.4")]]
    b = [mp.mpf("0.05"), mp.mpf("-0.02")]
    P = [[mp.mpf("0.2"), mp.mpf("0.1")], [mp.mpf("-0.3"), mp.mpf("0.25")], [mp.mpf("0.15"), mp.mpf("-0.05")]]
    triples = [(0, 0, 1), (1, 1, 0), (2, 0, 1)]
    dQ = [[mp.mpf(0), mp.mpf(0)], [mp.mpf(0), mp.mpf(0)]]
    db = [mp.mpf(0), mp.mpf(0)]
    newP = []
    for u, i, j in triples:
        dp, dqi, dbi, dqj, dbj = step(P[u], Q[i], b[i], Q[j], b[j], lu, lp, ln)
        newP.append([x + a * g for x, g in zip(P[u], dp)])
        for k in range(2):
            dQ[i][k] += dqi[k]
            dQ[j][k] += dqj[k]
        db[i] += dbi
        db[j] += dbj
    Qn = [[Q[r][k] + a * dQ[r][k] for k in range(2)] for r in range(2)]
    bn = [b[r] + a * db[r] for r in range(2)]
    print("3-user round: Q =", fmt(Qn))
    print("              b =", fmt(bn))
    print("              P =", fmt(newP))


def three_triple_client():
    # T = 3, triples (1,5), (1,6), (2,5) processed sequentially on a working copy
    a = mp.mpf("0.1")
    lu = lp = a / 20
    ln = a / 200
    Q = {i: [mp.mpf(i) / 10, mp.mpf(-i) / 20] for i in range(7)}
    b = {i: mp.mpf(i) / 100 for i in range(7)}
    p = [mp.mpf("0.3"), mp.mpf("0.2")]
    buf_f, buf_b = {}, {}
    for i, j in [(1, 5), (1, 6), (2, 5)]:
        dp, dqi, dbi, dqj, dbj = step(p, Q[i], b[i], Q[j], b[j], lu, lp, ln)
        p = [x + a * g for x, g in zip(p, dp)]
        Q[i] = [x + a * g for x, g in zip(Q[i], dqi)]
        b[i] = b[i] + a * dbi
        Q[j] = [x + a * g for x, g in zip(Q[j], dqj)]
        b[j] = b[j] + a * dbj
        for it, df, dbb in ((i, dqi, dbi), (j, dqj, dbj)):
            prev = buf_f.get(it, [0, 0])
            buf_f[it] = [x + y for x, y in zip(prev, df)]
            buf_b[it] = buf_b.get(it, 0) + dbb
    for it in sorted(buf_f):
        print(f"T=3 payload item {it}: d_factors =", fmt(buf_f[it]), "d_bias =", fmt(buf_b[it]))
    print("T=3 user vector:", fmt(p))


if __name__ == "__main__":
    worked_single_step()
    f1_value()
    t_test_value()
    three_user_round()
    three_triple_client()
