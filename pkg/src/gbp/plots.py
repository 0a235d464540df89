"""Standalone SVG figures built with ElementTree.

Structural elements carry CSS classes (``rail``, ``obs-point``, ``post-point``,
``prior-mean-marker``, ``interval``, ``rb-point``, ``se-whisker``,
``nominal-line``) so callers and tests can find them without parsing
geometry.
"""

import xml.etree.ElementTree as ET

import numpy as np

SVG_NS = "http://www.w3.org/2000/svg"
WIDTH, HEIGHT = 720, 420
MARGIN = {"left": 70, "right": 30, "top": 40, "bottom": 60}


class Scale:
    """Affine map from data values to pixel coordinates."""

    def __init__(self, lo, hi, p0, p1):
        if hi <= lo:
            pad = 0.5 * abs(lo) if lo != 0 else 0.5
            lo, hi = lo - pad, hi + pad
        self.lo, self.hi, self.p0, self.p1 = float(lo), float(hi), float(p0), float(p1)

    def __call__(self, v):
        return self.p0 + (np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)


def _padded(values, frac=0.05):
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = (hi - lo) * frac
    return lo - pad, hi + pad


def _svg(title):
    root = ET.Element("svg", xmlns=SVG_NS, width=str(WIDTH), height=str(HEIGHT),
                      viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(root, "title").text = title
    ET.SubElement(root, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    return root


def _line(parent, x1, y1, x2, y2, cls, stroke="black", width=1.0, **extra):
    return ET.SubElement(parent, "line", {"class": cls, "x1": f"{x1:.3f}", "y1": f"{y1:.3f}",
                                          "x2": f"{x2:.3f}", "y2": f"{y2:.3f}", "stroke": stroke,
                                          "stroke-width": f"{width}", **extra})


def _circle(parent, cx, cy, cls, filled, color="black", r=4.0):
    return ET.SubElement(parent, "circle", {"class": cls, "cx": f"{cx:.3f}", "cy": f"{cy:.3f}",
                                            "r": f"{r}", "stroke": color,
                                            "fill": color if filled else "none"})


def _text(parent, x, y, s, anchor="middle", size=13, **extra):
    el = ET.SubElement(parent, "text", {"x": f"{x:.1f}", "y": f"{y:.1f}", "text-anchor": anchor,
                                        "font-size": str(size), "font-family": "sans-serif", **extra})
    el.text = s
    return el


def _ticks(parent, scale, axis, at, n=5, fmt="{:.3g}"):
    for v in np.linspace(scale.lo, scale.hi, n):
        p = float(scale(v))
        if axis == "x":
            _line(parent, p, at, p, at + 5, "tick")
            _text(parent, p, at + 20, fmt.format(v), size=11)
        else:
            _line(parent, at - 5, p, at, p, "tick")
            _text(parent, at - 8, p + 4, fmt.format(v), anchor="end", size=11)


def _distinct(values, tol=1e-12):
    out = []
    for v in sorted(values):
        if not out or abs(v - out[-1]) > tol * max(1.0, abs(v)):
            out.append(v)
    return out


def _to_string(root):
    ET.indent(root)
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


def shrinkage_plot(doc):
    """Observed means (top rail) joined to posterior means (bottom rail)."""
    obs = np.array(doc.column("obs_mean"))
    post = np.array(doc.column("post_mean"))
    prior = doc.column("prior_mean")
    root = _svg("Shrinkage plot")
    x = Scale(*_padded(np.r_[obs, post, prior]), MARGIN["left"], WIDTH - MARGIN["right"])
    y_top, y_bot = MARGIN["top"] + 40, HEIGHT - MARGIN["bottom"] - 40
    g = ET.SubElement(root, "g", {"class": "plot-area"})
    _line(g, x.p0, y_top, x.p1, y_top, "rail", width=1.5, **{"data-rail": "observed"})
    _line(g, x.p0, y_bot, x.p1, y_bot, "rail", width=1.5, **{"data-rail": "posterior"})
    _text(g, x.p0 - 8, y_top + 4, "obs", anchor="end")
    _text(g, x.p0 - 8, y_bot + 4, "post", anchor="end")
    for v in _distinct(prior):
        px = float(x(v))
        _line(g, px, y_top - 20, px, y_bot + 20, "prior-mean-marker", stroke="red", width=1.5,
              **{"stroke-dasharray": "5,3", "data-value": repr(float(v))})
    for o, p in zip(obs, post):
        _line(g, float(x(o)), y_top, float(x(p)), y_bot, "shrink-segment", stroke="gray")
        _circle(g, float(x(o)), y_top, "obs-point", filled=False)
        _circle(g, float(x(p)), y_bot, "post-point", filled=True)
    _ticks(root, x, "x", y_bot + 25)
    return _to_string(root)


def interval_plot(doc, sort=True):
    """Per-group interval segments with observed (hollow) and posterior (filled) means."""
    order = doc.display_order if sort else list(range(len(doc.groups)))
    rows = [doc.groups[i] for i in order]
    low = np.array([r["low_intv"] for r in rows])
    upp = np.array([r["upp_intv"] for r in rows])
    obs = np.array([r["obs_mean"] for r in rows])
    post = np.array([r["post_mean"] for r in rows])
    prior = [r["prior_mean"] for r in rows]
    pct = 100 * doc.provenance["config"]["confidence"]
    root = _svg(f"{pct:g}% interval plot")
    k = len(rows)
    x = Scale(0.5, k + 0.5, MARGIN["left"], WIDTH - MARGIN["right"])
    y = Scale(*_padded(np.r_[low, upp, obs, prior]), HEIGHT - MARGIN["bottom"], MARGIN["top"])
    g = ET.SubElement(root, "g", {"class": "plot-area"})
    for v in _distinct(prior):
        py = float(y(v))
        _line(g, x.p0, py, x.p1, py, "prior-mean-line", stroke="red", **{"data-value": repr(float(v))})
    for i, r in enumerate(rows):
        px = float(x(i + 1))
        _line(g, px, float(y(r["low_intv"])), px, float(y(r["upp_intv"])), "interval", width=1.5,
              **{"data-label": r["label"]})
        _circle(g, px, float(y(r["obs_mean"])), "obs-point", filled=False)
        _circle(g, px, float(y(r["post_mean"])), "post-point", filled=True)
    _ticks(root, y, "y", x.p0)
    _text(root, (x.p0 + x.p1) / 2, HEIGHT - 15, "groups (sorted)" if sort else "groups")
    return _to_string(root)


def coverage_plot(cov, confidence=None):
    """Rao-Blackwellised coverage estimates with +-1 se whiskers and the nominal level."""
    rb = np.asarray(cov["coverageRB"], dtype=float)
    se = np.asarray(cov["se_coverageRB"], dtype=float)
    level = float(cov["spec"]["confidence"] if confidence is None else confidence)
    root = _svg("Coverage plot")
    k = rb.size
    x = Scale(0.5, k + 0.5, MARGIN["left"], WIDTH - MARGIN["right"])
    lo = min(level, float(np.min(rb - se))) - 0.01
    hi = min(1.0, max(level, float(np.max(rb + se))) + 0.01)
    y = Scale(lo, hi, HEIGHT - MARGIN["bottom"], MARGIN["top"])
    # the value-to-pixel map is recorded so the figure can be read back
    g = ET.SubElement(root, "g", {"class": "plot-area", "data-y-range": f"{y.lo!r},{y.hi!r}",
                                  "data-y-pixels": f"{y.p0!r},{y.p1!r}"})
    py = float(y(level))
    _line(g, x.p0, py, x.p1, py, "nominal-line", width=1.5,
          **{"id": "nominal-line", "data-level": repr(level)})
    for j in range(k):
        px = float(x(j + 1))
        _line(g, px, float(y(rb[j] - se[j])), px, float(y(rb[j] + se[j])), "se-whisker", stroke="gray")
        _circle(g, px, float(y(rb[j])), "rb-point", filled=False, color="red")
    _ticks(root, y, "y", x.p0)
    _text(root, (x.p0 + x.p1) / 2, HEIGHT - 15, "groups")
    _text(root, 18, (y.p0 + y.p1) / 2, "estimated coverage", transform=f"rotate(-90 18 {(y.p0 + y.p1) / 2:.1f})")
    return _to_string(root)
