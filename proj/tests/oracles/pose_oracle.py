"""Generates the pose-metric fixtures and freezes their expected values.

Errors and summaries are computed here with plain numpy, independently of
the C++ implementation:

  rot_err   = degrees(arccos(clip((trace(A^T B) - 1) / 2, -1, 1)))
  trans_err = degrees(arccos(clip(|t . t*| / (|t| |t*|), 0, 1)))
  RA_t / TA_t = fraction with err < t
  AUC_T = (1/T) sum_{t=1..T} fraction(max(rot, trans) < t)

Outputs (tests/data/pose):
  error_fixture.csv, error_fixture_expected.json
  fixture100_pairs.jsonl, fixture100_pred.jsonl, fixture100_expected.json
  random1000_pairs.jsonl, random1000_pred.jsonl, random1000_expected.json
"""
import json
import os
import sys

import numpy as np

THRESHOLDS = (15.0, 30.0)
AUC_MAX = 30


def rot_err_deg(a, b):
    c = (np.trace(a.T @ b) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def trans_err_deg(t, t_star):
    c = abs(float(t @ t_star)) / (np.linalg.norm(t) * np.linalg.norm(t_star))
    return float(np.degrees(np.arccos(min(c, 1.0))))


def median(v):
    s = sorted(v)
    n = len(s)
    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def summary(rot, trans):
    n = len(rot)
    out = {
        "n_pairs": n,
        "mre": median(rot),
        "ra": {str(int(t)): sum(1 for e in rot if e < t) / n for t in THRESHOLDS},
        "mte": median(trans),
        "ta": {str(int(t)): sum(1 for e in trans if e < t) / n for t in THRESHOLDS},
    }
    worst = [max(r, t) for r, t in zip(rot, trans)]
    passing = sum(sum(1 for w in worst if w < tau) for tau in range(1, AUC_MAX + 1))
    out["auc"] = passing / (AUC_MAX * n)
    return out


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return quat_to_rot(q)


def quat_to_rot(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(r):
    # Shepperd's method, w >= 0.
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def axis_angle(axis, deg):
    axis = np.asarray(axis, dtype=float)
    axis /= np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    a = np.radians(deg)
    return np.eye(3) + np.sin(a) * k + (1 - np.cos(a)) * (k @ k)


def near_threshold(v):
    cuts = list(THRESHOLDS) + list(range(1, AUC_MAX + 1))
    return any(abs(v - c) < 1e-6 for c in cuts)


def error_fixture(out):
    # 50 below 15 (max 14), 25 in [16, 29], 25 at or above 31: the median
    # averages 14 and 16, so MRE = 15, RA15 = 0.5, RA30 = 0.75 by design.
    rot = [5.0 + 9.0 * i / 49.0 for i in range(49)] + [14.0]
    rot += [16.0] + [16.5 + 12.5 * i / 23.0 for i in range(24)]
    rot += [31.0 + 2.0 * i for i in range(25)]
    trans = [0.5 + 0.4 * i for i in range(100)]
    cats = ["large", "small", "none"]
    order = np.random.default_rng(7).permutation(100)
    with open(os.path.join(out, "error_fixture.csv"), "w") as f:
        f.write("scene,image_a,image_b,category,rot_err,trans_err\n")
        for k, i in enumerate(order):
            f.write("fx,%d,%d,%s,%r,%r\n" % (2 * k + 1, 2 * k + 2, cats[k % 3], rot[i], trans[i]))
    s = summary(rot, trans)
    assert s["mre"] == 15.0 and s["ra"]["15"] == 0.5 and s["ra"]["30"] == 0.75, s
    with open(os.path.join(out, "error_fixture_expected.json"), "w") as f:
        json.dump({"all": s}, f, indent=2, sort_keys=True)
        f.write("\n")


def pair_fixture(out, prefix, n, seed, scenes):
    rng = np.random.default_rng(seed)
    pairs, preds, recs = [], [], []
    k = 0
    while len(pairs) < n:
        k += 1
        scene = scenes[k % len(scenes)]
        ia, ib = 2 * k + 1, 2 * k + 2
        ra, rb = random_rotation(rng), random_rotation(rng)
        ta, tb = rng.normal(size=3) * 3, rng.normal(size=3) * 3
        r_rel = rb @ ra.T
        t_rel = tb - r_rel @ ta
        # Prediction: perturb, then move into an arbitrary similarity frame.
        err_deg = float(rng.choice([rng.uniform(0, 10), rng.uniform(10, 40), rng.uniform(40, 180)]))
        pa = ra
        pb = axis_angle(rng.normal(size=3), err_deg) @ rb
        qa_t = ta + rng.normal(size=3) * 0.3
        qb_t = tb + rng.normal(size=3) * 0.3
        g = random_rotation(rng)
        s = float(rng.uniform(0.2, 5.0))
        c = rng.normal(size=3) * 4
        pa_w, pb_w = pa @ g.T, pb @ g.T
        ta_w = s * qa_t - pa @ g.T @ c
        tb_w = s * qb_t - pb @ g.T @ c
        pr_rel = pb_w @ pa_w.T
        pt_rel = tb_w - pr_rel @ ta_w
        rot = rot_err_deg(pr_rel, r_rel)
        trans = trans_err_deg(pt_rel, t_rel)
        if near_threshold(rot) or near_threshold(trans) or near_threshold(max(rot, trans)):
            continue
        cat = ["large", "small", "none"][len(pairs) % 3]
        na, nb = "im_%04d.jpg" % ia, "im_%04d.jpg" % ib
        pairs.append({
            "scene": scene, "image_a": ia, "image_b": ib, "name_a": na, "name_b": nb,
            "category": cat, "yaw_deg": 0.0, "pitch_deg": 0.0, "verified": False,
            "r_rel": [float(v) for v in r_rel.reshape(-1)],
            "q_rel": [float(v) for v in rot_to_quat(r_rel)],
            "t_rel": [float(v) for v in t_rel],
        })
        qa, qb = rot_to_quat(pa_w), rot_to_quat(pb_w)
        row = {"scene": scene, "qa": [float(v) for v in qa], "ta": [float(v) for v in ta_w],
               "qb": [float(v) for v in qb], "tb": [float(v) for v in tb_w]}
        by_id = len(pairs) % 4 == 0
        row["image_a"], row["image_b"] = (ia, ib) if by_id else (na, nb)
        if len(pairs) % 5 == 0:  # reversed orientation
            row = {"scene": scene, "image_a": row["image_b"], "image_b": row["image_a"],
                   "qa": row["qb"], "ta": row["tb"], "qb": row["qa"], "tb": row["ta"]}
        preds.append(row)
        recs.append((cat, rot, trans))
    order = rng.permutation(len(preds))
    with open(os.path.join(out, prefix + "_pairs.jsonl"), "w") as f:
        for p in pairs:
            f.write(json.dumps(p) + "\n")
    with open(os.path.join(out, prefix + "_pred.jsonl"), "w") as f:
        for i in order:
            f.write(json.dumps(preds[i]) + "\n")
    expected = {"all": summary([r[1] for r in recs], [r[2] for r in recs])}
    for cat in ("large", "small", "none"):
        sub = [r for r in recs if r[0] == cat]
        expected[cat] = summary([r[1] for r in sub], [r[2] for r in sub])
    expected["records"] = [{"rot_err": r[1], "trans_err": r[2]} for r in recs]
    with open(os.path.join(out, prefix + "_expected.json"), "w") as f:
        json.dump(expected, f, indent=1, sort_keys=True)
        f.write("\n")


def main(out):
    os.makedirs(out, exist_ok=True)
    error_fixture(out)
    pair_fixture(out, "fixture100", 100, 100, ["scene_a", "scene_b"])
    pair_fixture(out, "random1000", 1000, 1000, ["s0", "s1", "s2", "s3"])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         os.path.join(os.path.dirname(__file__), "..", "data", "pose"))
