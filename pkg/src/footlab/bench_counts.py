"""Stable-point counts measured on the physical test bench.

Per (spring set, foot) the six terrains in ``TERRAIN_IDS`` order, each as
(n, n_E). Only the soft-spring rigid row is a real reference: the rigid foot
has no coil spring, so its stiff-set row repeats the same sweep. The printed
percentages are included to check the scoring arithmetic against.
"""

from .terrain import TERRAIN_IDS

COUNTS = {
    ("soft", "RIGID"): [(38, 0), (36, 0), (47, 0), (33, 0), (27, 0), (35, 0)],
    ("soft", "KKF"): [(33, 3), (32, 5), (40, 3), (38, 4), (34, 2), (32, 1)],
    ("soft", "KKK"): [(41, 4), (29, 3), (36, 2), (38, 1), (34, 3), (35, 3)],
    ("soft", "KRF"): [(38, 1), (34, 1), (42, 0), (39, 2), (33, 0), (40, 0)],
    ("soft", "KRK"): [(41, 0), (31, 1), (42, 0), (41, 1), (40, 0), (42, 2)],
    ("soft", "KRR"): [(39, 2), (30, 1), (37, 3), (36, 1), (35, 2), (35, 3)],
    ("soft", "RRR"): [(38, 1), (24, 0), (42, 0), (40, 1), (33, 0), (40, 0)],
    ("stiff", "RIGID"): [(38, 0), (36, 0), (47, 0), (33, 0), (27, 0), (35, 0)],
    ("stiff", "KRF"): [(38, 0), (29, 0), (42, 0), (48, 5), (33, 0), (40, 0)],
    ("stiff", "KRK"): [(43, 0), (35, 0), (44, 2), (42, 0), (43, 0), (49, 0)],
    ("stiff", "RRR"): [(34, 0), (33, 0), (45, 0), (39, 2), (39, 0), (48, 8)],
}

# printed (%, %_E) pairs and cell colour class, same layout as COUNTS
PRINTED = {
    ("soft", "RIGID"): [(100, 0), (100, 0), (100, 0), (100, 0), (100, 0), (100, 0)],
    ("soft", "KKF"): [(87, 9), (89, 16), (85, 8), (115, 11), (126, 6), (91, 3)],
    ("soft", "KKK"): [(108, 10), (81, 10), (77, 6), (115, 3), (126, 9), (100, 9)],
    ("soft", "KRF"): [(100, 3), (94, 3), (89, 0), (118, 5), (122, 0), (114, 0)],
    ("soft", "KRK"): [(108, 0), (86, 3), (89, 0), (124, 2), (148, 0), (120, 5)],
    ("soft", "KRR"): [(103, 5), (83, 3), (79, 8), (109, 3), (130, 6), (100, 9)],
    ("soft", "RRR"): [(100, 3), (67, 0), (89, 0), (121, 3), (122, 0), (114, 0)],
    ("stiff", "RIGID"): [(100, 0), (100, 0), (100, 0), (100, 0), (100, 0), (100, 0)],
    ("stiff", "KRF"): [(100, 0), (81, 0), (89, 0), (145, 10), (122, 0), (114, 0)],
    ("stiff", "KRK"): [(113, 0), (97, 0), (94, 5), (127, 0), (159, 0), (140, 0)],
    ("stiff", "RRR"): [(89, 0), (92, 0), (96, 0), (118, 5), (144, 0), (137, 17)],
}

_O, _R, _Y, _G = "Orange", "Red", "Yellow", "Green"
COLORS = {
    ("soft", "RIGID"): [_O] * 6,
    ("soft", "KKF"): [_R, _R, _R, _Y, _Y, _O],
    ("soft", "KKK"): [_O, _R, _R, _Y, _Y, _O],
    ("soft", "KRF"): [_O, _O, _R, _Y, _Y, _Y],
    ("soft", "KRK"): [_O, _R, _R, _Y, _G, _Y],
    ("soft", "KRR"): [_O, _R, _R, _O, _Y, _O],
    ("soft", "RRR"): [_O, _R, _R, _Y, _Y, _Y],
    ("stiff", "RIGID"): [_O] * 6,
    ("stiff", "KRF"): [_O, _R, _R, _G, _Y, _Y],
    ("stiff", "KRK"): [_Y, _O, _O, _Y, _G, _G],
    ("stiff", "RRR"): [_R, _O, _O, _Y, _G, _G],
}

# printed n_average column
AVERAGES = {
    ("soft", "RIGID"): 36.0, ("soft", "KKF"): 34.8, ("soft", "KKK"): 35.5, ("soft", "KRF"): 37.7,
    ("soft", "KRK"): 39.5, ("soft", "KRR"): 35.3, ("soft", "RRR"): 36.2,
    ("stiff", "RIGID"): 36.0, ("stiff", "KRF"): 38.3, ("stiff", "KRK"): 42.7, ("stiff", "RRR"): 39.7,
}


def reference_counts(spring_set: str) -> list:
    return [n for n, _ in COUNTS[(spring_set, "RIGID")]]


def rows():
    """Yield (spring_set, foot, terrain_id, n, n_E, n_ref, pct, pct_E, color) per cell."""
    for key, cells in COUNTS.items():
        spring, foot = key
        for tid, (n, n_e), n_ref, (pct, pct_e), color in zip(
                TERRAIN_IDS, cells, reference_counts(spring), PRINTED[key], COLORS[key]):
            yield spring, foot, tid, n, n_e, n_ref, pct, pct_e, color
