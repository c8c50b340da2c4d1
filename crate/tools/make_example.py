"""Generates data/example.json, the illustrative 24-hour dataset.

Loads and renewable models are invented for illustration; device, gas and
carbon parameters are fixed below. Net electric load (load minus expected
renewables) stays between about 118 and 138 MW. Above roughly 140 MW the
thermal units climb into chord segments that gas cogeneration undercuts near
the top of a 0 to 300 ¥/t price sweep. The electric load stays above 195 MW so
the must-run nuclear output can be absorbed in mode 2.
"""
import json
import math
import pathlib

from scipy import integrate, stats

WIND = dict(k_shape=2.2, v_in=3.0, v_rated=13.0, v_out=25.0, p_rated=120.0)


def wind_mean(c):
    w = stats.weibull_min(WIND["k_shape"], scale=c)
    ramp = integrate.quad(
        lambda v: WIND["p_rated"] * (v - WIND["v_in"]) / (WIND["v_rated"] - WIND["v_in"]) * w.pdf(v),
        WIND["v_in"], WIND["v_rated"])[0]
    return ramp + WIND["p_rated"] * (w.cdf(WIND["v_out"]) - w.cdf(WIND["v_rated"]))


hours = range(1, 25)
# Night-time wind is stronger.
c_scale = [10.6 - 1.4 * math.sin(math.pi * (h - 6) / 14) if 6 <= h <= 20 else 10.6 for h in hours]
solar_rated = [max(0.0, 70.0 * math.sin(math.pi * (h - 6) / 13)) if 6 < h < 19 else 0.0 for h in hours]
net_target = [118 + 20 * math.exp(-((h - 19) / 3.0) ** 2) + 10 * math.exp(-((h - 10) / 2.5) ** 2) for h in hours]
heat = [round(150 - 45 * math.exp(-((h - 14) / 4.0) ** 2), 1) for h in hours]

uncertainty, electric = [], []
for h, c, spr, net in zip(hours, c_scale, solar_rated, net_target):
    solar = dict(alpha_s=2.5, beta_s=2.5, p_rated=round(spr, 1))
    mean = wind_mean(c) + solar["p_rated"] / 2.0
    electric.append(max(198.0, round(mean + net, 1)))
    uncertainty.append(dict(wind=dict(WIND, c_scale=round(c, 2)), solar=solar))

thermal = [
    dict(p_max=40, p_min=12, r_d=20, r_u=20, a=0.18, b=237.25, c=113.02, w=40, b_th=0.97),
    dict(p_max=40, p_min=12, r_d=20, r_u=20, a=0.18, b=237.25, c=113.02, w=40, b_th=0.97),
    dict(p_max=30, p_min=10, r_d=15, r_u=15, a=0.13, b=245.31, c=99.52, w=38, b_th=1.06),
    dict(p_max=30, p_min=10, r_d=15, r_u=15, a=0.13, b=245.31, c=99.52, w=38, b_th=1.06),
]
gc = [dict(pe_min=30, pe_max=100, ph_max=120, r_d_gc=60, r_u_gc=60, delta=45, eta_loss=0.1, c_g=0.3)] * 2
np_units = [dict(pe_min=64, pe_max=100, ph_max=120, c_v=0.3, beta=250)] * 2

doc = {
    "_note": "Illustrative dataset: loads and renewable models are invented. Regenerate with tools/make_example.py.",
    "horizon": {"T": 24, "dt_hours": 1},
    "thermal": thermal,
    "gc": gc,
    "np": np_units,
    "p2g": dict(eta_p2g=0.6, p_max_p2g=70, r_u_p2g=70, r_d_p2g=70),
    "ess": dict(s_min=32, s_max=200, s_0=100, p_d_max=50, p_c_max=50, eta_e=0.95, g1=80, g2=80, lambda_res=50),
    "hss": dict(c_max=160, c_0=80, ph_c_max=40),
    "gas": dict(hhv=36, epsilon=3.6, mu_gc=21, b_ng=0.00234),
    "carbon": dict(f=0, k1=40, k2=120, k3=200, e1=1500, e2=3000),
    "loads": {"electric": electric, "heat": heat},
    "uncertainty": uncertainty,
    "alpha": 0.9,
    "step_l": 0.25,
    "mode": 3,
    "solver": {"time_limit_s": 120, "mip_gap": 1e-4},
    "tp_enabled": [True, False, False],
}
out = pathlib.Path(__file__).resolve().parent.parent / "data" / "example.json"
out.write_text(json.dumps(doc, indent=2) + "\n")
for h, e, hl, u in zip(hours, electric, heat, uncertainty):
    print(h, e, hl, u["wind"]["c_scale"], u["solar"]["p_rated"])
