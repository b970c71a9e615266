"""High-precision oracle values for the test suite.

Run manually; paste the printed literals into tests.  Every value here is
computed with mpmath adaptive quadrature / arbitrary-precision Gamma, fully
independent of the package implementation.
"""

import mpmath as mp

mp.mp.dps = 30


def gamma_grid():
    pts = [0.1, 0.25, 0.5, 0.75, 1.25, 1.5, 2.25, 3.5, 4.75, 7.2, 11.0, 15.5,
           -0.5, -1.5, -2.3, -6.7]
    print("# gamma oracle (mpmath.gamma)")
    for x in pts:
        print(f"    ({x!r}, {mp.nstr(mp.gamma(x), 17)}),")


def a_ns(n, s):
    return mp.gamma(n / mp.mpf(2) + s) * s * (1 - s) / (
        mp.pi ** (n / mp.mpf(2)) * mp.gamma(2 - s))


def norm_constants():
    print("# a_{N,s}")
    for (n, s) in [(2, 0.5), (3, 0.75), (2, 0.75), (3, 0.6)]:
        print(f"    (({n}, {s}), {mp.nstr(a_ns(n, mp.mpf(s)), 17)}),")
    print("# -a_{N,-s} = Gamma(N/2-s) s(1+s) / (pi^{N/2} Gamma(2+s))")
    for (n, s) in [(2, 0.75)]:
        s = mp.mpf(s)
        v = mp.gamma(n / mp.mpf(2) - s) * s * (1 + s) / (
            mp.pi ** (n / mp.mpf(2)) * mp.gamma(2 + s))
        print(f"    (({n}, {float(s)}), {mp.nstr(v, 17)}),")


def kappa(n, s):
    return mp.gamma(n / mp.mpf(2)) / (
        2 ** (2 * s) * mp.pi ** (n / mp.mpf(2)) * mp.gamma(s) ** 2)


def xi_integral(n, s, r0):
    return mp.quad(lambda t: t ** (s - 1) * (1 + t) ** (-n / mp.mpf(2)),
                   [0, min(r0, 1), r0])


def green(n, s, x, y):
    x = mp.matrix(x)
    y = mp.matrix(y)
    d = mp.norm(x - y)
    r0 = (1 - mp.norm(x) ** 2) * (1 - mp.norm(y) ** 2) / d ** 2
    return kappa(n, s) * d ** (2 * s - n) * xi_integral(n, s, r0)


def green_spots():
    s = mp.mpf(3) / 4
    print("# green_ball spots, N=2 s=0.75")
    cases = [((0.0, 0.0), (0.5, 0.0)),
             ((0.3, 0.2), (-0.2, 0.4)),
             ((0.9, 0.0), (0.85, 0.05))]
    for x, y in cases:
        print(f"    ({x}, {y}, {mp.nstr(green(2, s, x, y), 17)}),")
    print("# xi integral spots (r0, value), s=0.75 N=2")
    for r0 in [1e-6, 0.01, 0.5, 1.0, 3.0, 50.0, 1e8]:
        print(f"    ({r0!r}, {mp.nstr(xi_integral(2, s, mp.mpf(r0)), 17)}),")


def poisson_spot():
    n = 2
    s = mp.mpf(3) / 4
    y = mp.matrix([1.5, 0.0])
    mns = mp.gamma(n / mp.mpf(2) - s) * s * (1 + s) / (
        mp.pi ** (n / mp.mpf(2)) * mp.gamma(2 + s))

    def outer(r):
        def inner(th):
            z = mp.matrix([r * mp.cos(th), r * mp.sin(th)])
            return green(n, s, (0, 0), z) / mp.norm(z - y) ** (n + 2 * s)
        return 2 * r * mp.quad(inner, [0, mp.pi / 2, mp.pi])

    val = mns * mp.quad(outer, [0, 0.5, 0.9, 0.99, 1])
    print("# poisson_ball(x=0, y=(1.5,0)) at N=2, s=0.75")
    print(f"    {mp.nstr(val, 15)}")


def K_kernel(n, s, u):
    q = n / mp.mpf(2) + s
    return mp.quad(lambda t: (t ** (n - 1) + t ** (2 * s - 1)) *
                   (1 + t * t - 2 * t * u) ** (-q), [0, 1])


def B_kernel(n, s, beta, u):
    q = n / mp.mpf(2) + s
    cs = beta + 2 * s - n

    def f(t):
        return (t ** (-beta) - 1) * (t ** (n - 1) - t ** (n - 1 + cs)) * \
            (1 + t * t - 2 * t * u) ** (-q)
    return mp.quad(f, [0, mp.mpf(1) / 2, 1])


def kernel_spots():
    print("# radial kernel K spots: (n, s, u, value)")
    for (n, s, u) in [(2, 0.75, -1.0), (2, 0.75, 0.0), (2, 0.75, 0.9),
                      (2, 0.75, 0.999), (2, 0.6, 0.5), (3, 0.6, 0.0),
                      (3, 0.6, 0.95)]:
        v = K_kernel(n, mp.mpf(s), mp.mpf(u))
        print(f"    (({n}, {s}, {u}), {mp.nstr(v, 15)}),")
    print("# beta kernel B spots: (n, s, beta, u, value)")
    for (n, s, b, u) in [(2, 0.75, 1.25, 0.0), (2, 0.75, 1.25, 0.5),
                         (2, 0.75, 1.5, -0.5), (2, 0.75, 1.5, 0.9),
                         (2, 0.75, 0.75, 0.0), (3, 0.6, 2.4, 0.0),
                         (3, 0.6, 2.4, 0.9), (2, 0.6, 1.1, 0.3)]:
        v = B_kernel(n, mp.mpf(s), mp.mpf(b), mp.mpf(u))
        print(f"    (({n}, {s}, {b}, {u}), {mp.nstr(v, 15)}),")


def c35(n, s, beta):
    # a * |S^{N-2}| int_{-1}^{1} B(u) (1-u^2)^{(N-3)/2} du, substituted u=cos(t^2)
    a = a_ns(n, mp.mpf(s))
    if n == 2:
        # 2 * int_0^pi B(cos th) dth with th = t^2
        def f(t):
            return B_kernel(n, mp.mpf(s), mp.mpf(beta), mp.cos(t * t)) * 2 * t
        val = 2 * mp.quad(f, [0, mp.sqrt(mp.pi / 2), mp.sqrt(mp.pi)])
    else:
        # 2*pi * int_0^pi B(cos th) sin th dth
        def f(t):
            th = t * t
            return B_kernel(n, mp.mpf(s), mp.mpf(beta), mp.cos(th)) * mp.sin(th) * 2 * t
        val = 2 * mp.pi * mp.quad(f, [0, mp.sqrt(mp.pi / 2), mp.sqrt(mp.pi)])
    return a * val


def c35_spots():
    print("# c35-style constant (a * zonal total of B): (n, s, beta, value)")
    for (n, s, b) in [(2, 0.75, 1.5), (2, 0.75, 0.75), (2, 0.75, 1.25),
                      (2, 0.75, 1.6), (3, 0.6, 2.4)]:
        print(f"    (({n}, {s}, {b}), {mp.nstr(c35(n, s, b), 13)}),")


def b_const_spots():
    print("# b_{N,s} = 2 a int_0^inf (1+x^2)^(-N/2-s) dx")
    for (n, s) in [(2, 0.5), (2, 0.75), (3, 0.6)]:
        s = mp.mpf(s)
        q = n / mp.mpf(2) + s
        integ = mp.quad(lambda x: (1 + x * x) ** (-q), [0, 1, mp.inf])
        v = 2 * a_ns(n, s) * integ
        print(f"    (({n}, {float(s)}), {mp.nstr(v, 17)}),")


def torsion_const():
    print("# torsion constant Gamma(N/2) / (4^s Gamma(N/2+s) Gamma(1+s)), (2,0.75)")
    n, s = 2, mp.mpf(3) / 4
    v = mp.gamma(n / mp.mpf(2)) / (4 ** s * mp.gamma(n / mp.mpf(2) + s) * mp.gamma(1 + s))
    print(f"    {mp.nstr(v, 17)}")


def martin_spots():
    print("# martin closed form (1-|x|^2)^s / |x-z|^N spots, N=2 s=0.75")
    for x, z in [((0.5, 0.0), (1.0, 0.0)), ((0.0, 0.3), (0.0, -1.0)),
                 ((0.9, 0.0), (1.0, 0.0))]:
        x = mp.matrix(x)
        z = mp.matrix(z)
        v = (1 - mp.norm(x) ** 2) ** (mp.mpf(3) / 4) / mp.norm(x - z) ** 2
        print(f"    (({float(x[0])}, {float(x[1])}), ({float(z[0])}, {float(z[1])}), {mp.nstr(v, 17)}),")


if __name__ == "__main__":
    gamma_grid()
    norm_constants()
    green_spots()
    kernel_spots()
    c35_spots()
    b_const_spots()
    torsion_const()
    martin_spots()
    poisson_spot()
