"""Regenerate the bundled case documents in crates/core/cases.

The 118-bus cases take topology, generator locations and capacities from the
IEEE 118-bus test system as shipped with PYPOWER; commitment data, linear
costs and the load profile are synthetic. Requires `pip install pypower`.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
from pypower.case118 import case118

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "cases"
T = 24

# Hourly load as a fraction of the daily peak.
SHAPE = [0.64, 0.60, 0.58, 0.56, 0.56, 0.58, 0.64, 0.73, 0.82, 0.89, 0.94, 0.97,
         0.98, 0.96, 0.94, 0.93, 0.94, 0.97, 1.00, 0.98, 0.93, 0.86, 0.77, 0.69]


def example1():
    units = [
        dict(id="1", p_min=50.0, p_max=200.0, ramp=200.6, startup_ramp=150.3,
             initial_ramp=150.3, min_up=2, min_down=2, energy_cost=65.0,
             startup_cost=0.0, noload_cost=0.0, init_on=False, init_dwell=4,
             init_power=0.0),
        dict(id="2", p_min=50.0, p_max=200.0, ramp=40.7, startup_ramp=70.35,
             initial_ramp=70.35, min_up=6, min_down=6, energy_cost=40.0,
             startup_cost=6000.0, noload_cost=0.0, init_on=True, init_dwell=8,
             init_power=100.0),
    ]
    demand = [100, 120, 150, 190, 230, 270, 310, 340, 365, 380, 380, 375,
              360, 340, 320, 300, 280, 260, 240, 220, 200, 180, 165, 150]
    return dict(horizon=T, mode="system", units=units,
                system_demand=[float(d) for d in demand])


def units118(demand0):
    ppc = case118()
    gen, cost = ppc["gen"], ppc["gencost"]
    units = []
    for k, (g, c) in enumerate(zip(gen, cost)):
        pmax = float(g[8])
        c2, c1 = float(c[4]), float(c[5])
        if pmax >= 300:
            cls = dict(frac=0.35, up=8, down=8, ramp=0.30, v=0.45, su=40.0, nl=4.0)
        elif pmax >= 100:
            cls = dict(frac=0.30, up=4, down=4, ramp=0.50, v=0.60, su=25.0, nl=3.0)
        else:
            cls = dict(frac=0.25, up=2, down=1, ramp=1.00, v=1.00, su=10.0, nl=2.0)
        pmin = round(cls["frac"] * pmax, 1)
        # Secant slope of the quadratic cost between p_min and p_max, with a
        # small deterministic offset so no two units tie.
        energy = round(c1 + c2 * (pmin + pmax) + 0.013 * k, 3)
        units.append(dict(
            id=f"G{k + 1:02d}", bus=int(g[0]), p_min=pmin, p_max=pmax,
            ramp=round(cls["ramp"] * pmax, 1),
            startup_ramp=round(max(pmin, cls["v"] * pmax), 1),
            initial_ramp=round(cls["ramp"] * pmax, 1),
            min_up=cls["up"], min_down=cls["down"], energy_cost=energy,
            startup_cost=round(cls["su"] * pmax ** 0.9, 2),
            noload_cost=round(cls["nl"] * pmax ** 0.7, 2),
            init_on=False, init_dwell=12, init_power=0.0))
    # Initially online: cheapest units covering the first-hour demand with
    # margin, loaded in merit order.
    order = sorted(range(len(units)), key=lambda i: (units[i]["energy_cost"], units[i]["id"]))
    cap, on = 0.0, []
    for i in order:
        if cap >= 1.15 * demand0:
            break
        on.append(i)
        cap += units[i]["p_max"]
    rest = demand0 - sum(units[i]["p_min"] for i in on)
    for n, i in enumerate(on):
        u = units[i]
        p = u["p_min"] + min(max(rest, 0.0), u["p_max"] - u["p_min"])
        rest -= p - u["p_min"]
        u.update(init_on=True, init_power=round(p, 3), init_dwell=3 if n % 4 == 0 else 12)
    return units, ppc


def dc_flows(ppc, inj):
    bus = ppc["bus"]
    br = ppc["branch"]
    n = bus.shape[0]
    B = np.zeros((n, n))
    for b in br:
        s, r, x = int(b[0]) - 1, int(b[1]) - 1, b[3]
        B[s, s] += 1 / x; B[r, r] += 1 / x; B[s, r] -= 1 / x; B[r, s] -= 1 / x
    ref = int(np.where(bus[:, 1] == 3)[0][0])
    keep = [i for i in range(n) if i != ref]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], inj[keep])
    return np.array([(theta[int(b[0]) - 1] - theta[int(b[1]) - 1]) / b[3] for b in br]), ref


def ieee118(transmission):
    ppc = case118()
    bus = ppc["bus"]
    pd = bus[:, 2]
    total_cap = float(ppc["gen"][:, 8].sum())
    peak = round(0.52 * total_cap, -1)
    system = [round(peak * s, 2) for s in SHAPE]
    units, ppc = units118(system[0])
    if not transmission:
        return dict(horizon=T, mode="system", units=units, system_demand=system)
    shares = pd / pd.sum()
    nodal = [[round(float(shares[n]) * d, 4) for d in system] for n in range(len(pd))]
    # Line limits from peak-hour flows of a merit-order dispatch, with the
    # most heavily used corridors tightened to create congestion.
    order = sorted(range(len(units)), key=lambda i: units[i]["energy_cost"])
    p = np.zeros(len(units))
    rest = system[SHAPE.index(1.0)]
    for i in order:
        p[i] = min(units[i]["p_max"], max(rest, 0.0))
        rest -= p[i]
    inj = -np.array([row[SHAPE.index(1.0)] for row in nodal])
    for i, u in enumerate(units):
        inj[u["bus"] - 1] += p[i]
    flows, ref = dc_flows(ppc, inj)
    heavy = set(np.argsort(-np.abs(flows))[:6].tolist())
    lines = []
    for l, b in enumerate(ppc["branch"]):
        f = abs(flows[l])
        lim = 0.85 * f if l in heavy else max(1.4 * f, 150.0)
        lim = float(math.ceil(lim))
        lines.append(dict(**{"from": int(b[0]), "to": int(b[1])}, reactance=float(b[3]),
                          f_min=-lim, f_max=lim))
    return dict(horizon=T, mode="nodal", units=units,
                network=dict(bus_count=len(pd), reference_bus=ref + 1, lines=lines,
                             nodal_demand=nodal))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in [("example1.json", example1()),
                      ("ieee118.json", ieee118(False)),
                      ("ieee118_tx.json", ieee118(True))]:
        (OUT / name).write_text(json.dumps(doc, indent=1) + "\n")
        print(name, file=sys.stderr)


if __name__ == "__main__":
    main()
