"""Emit src/vfr/_sh_poly.py: real SH basis polynomials up to degree 7.

Convention: orthonormal, no Condon-Shortley phase, flat order (l, m=-l..l).
Run from the repository root: ``python tools/gen_sh.py``.
"""

from pathlib import Path

import sympy as sp

MAX_DEGREE = 7
x, y, z = sp.symbols("x y z", real=True)


def basis(l, m):
    t = sp.Symbol("t")
    dp = sp.diff(sp.legendre(l, t), t, abs(m)).subs(t, z)
    am = abs(m)
    k = sp.sqrt(sp.Rational(2 * l + 1, 1) / (4 * sp.pi) * sp.factorial(l - am) / sp.factorial(l + am))
    if m == 0:
        return sp.expand(k * dp)
    xy = sp.expand((x + sp.I * y) ** am)
    part = sp.re(xy) if m > 0 else sp.im(xy)
    return sp.expand(sp.sqrt(2) * k * dp * part)


def term(coeff, powers):
    names = []
    for sym, p in zip("xyz", powers):
        if p:
            names.append(f"{sym}{p}")
    c = repr(float(coeff))
    return " * ".join([c] + names)


def main():
    lines = [
        '"""Hard-coded real spherical harmonics polynomials (generated by tools/gen_sh.py)."""',
        "",
        "import numpy as np",
        "",
        f"MAX_DEGREE = {MAX_DEGREE}",
        "",
        "",
        "def eval_sh_poly(degree, x, y, z, out):",
        '    """Fill ``out[..., :(degree + 1) ** 2]`` for unit vectors (x, y, z)."""',
        "    x1, y1, z1 = x, y, z",
    ]
    for p in range(2, MAX_DEGREE + 1):
        lines.append(f"    x{p} = x{p - 1} * x; y{p} = y{p - 1} * y; z{p} = z{p - 1} * z")
    idx = 0
    for l in range(MAX_DEGREE + 1):
        if l > 0:
            lines.append(f"    if degree < {l}:")
            lines.append("        return out")
        for m in range(-l, l + 1):
            expr = basis(l, m)
            poly = sp.Poly(expr, x, y, z)
            terms = [term(c, mon) for mon, c in sorted(poly.terms(), reverse=True)]
            if len(terms) == 1 and terms[0].replace(".", "").replace("e-", "").isdigit():
                rhs = terms[0]
            else:
                rhs = " + ".join(terms).replace("+ -", "- ")
            if poly.total_degree() == 0:
                rhs = f"np.full_like(x, {rhs})"
            lines.append(f"    out[..., {idx}] = {rhs}")
            idx += 1
    lines.append("    return out")
    lines.append("")
    Path("src/vfr/_sh_poly.py").write_text("\n".join(lines))


if __name__ == "__main__":
    main()
