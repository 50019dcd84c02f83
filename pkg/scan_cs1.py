import numpy as np, time, sys
from multiprocessing import Pool
from dataclasses import replace
from vhetsim.relay import Cs1Config, build_two_cell_topology, draw_cs1_channels, run_cs1_realization
from vhetsim.stats import derive_trial_seed

def one_topo(args):
    bs_p, haps_p, master, t, n_real = args
    cfg = replace(Cs1Config(), bs_power_dbm=bs_p, haps_power_dbm=haps_p)
    topo = build_two_cell_topology(cfg, np.random.default_rng(derive_trial_seed(master ^ 0x746F706F, t, 0)))
    out = []
    for r in range(n_real):
        chans = draw_cs1_channels(cfg, topo, np.random.default_rng(derive_trial_seed(master, t, r)))
        res = run_cs1_realization(cfg, chans)
        out.append({s: v.sum_rate for s, v in res.items()})
    return out

if __name__ == "__main__":
    n_topo, n_real = 30, 5
    for bs_p, haps_p in [(30.0, 43.0), (33.0, 43.0)]:
        t0 = time.time()
        with Pool(8) as pool:
            rows = pool.map(one_topo, [(bs_p, haps_p, 5, t, n_real) for t in range(n_topo)])
        sums = {s: np.sort([rr[s] for row in rows for rr in row]) for s in ("joint_haps", "no_haps", "selfish")}
        line = f"bs={bs_p:.0f} haps={haps_p:.0f} ({time.time()-t0:.0f}s): "
        for s, v in sums.items():
            p5 = v[max(0, int(np.ceil(0.05*len(v)))-1)]
            line += f"{s[:6]}: mean={v.mean()/1e6:6.0f} p5={p5/1e6:6.0f} | "
        print(line, flush=True)
