#!/usr/bin/env python3
"""Independent recomputation of the fixture audit.

Reads the mock table, prompt set, population and alias files directly and
recomputes per-prompt distributions, ER, aggregates and the r sweep with
plain Python floats. With --report it compares against a report written by
the CLI; otherwise it prints the values.
"""
import argparse
import json
import math
import os
import sys


def load_table(path):
    vocab, label, table = 50257, "mock", {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("\t")
                if key == "fallback_vocab":
                    vocab = int(value)
                elif key == "model":
                    label = value
                continue
            ctx, tok, p = line.split("\t")
            table.setdefault(ctx, {})[tok] = float(p)
    return vocab, label, table


def tokenize(text, tokens):
    lengths = sorted({len(t) for t in tokens}, reverse=True)
    out, pos = [], 0
    while pos < len(text):
        take = 0
        for n in lengths:
            if text[pos:pos + n] in tokens:
                take = n
                break
        if take == 0:
            end = pos
            while end < len(text) and text[end].isspace():
                end += 1
            while end < len(text) and not text[end].isspace():
                end += 1
            take = end - pos
        out.append(text[pos:pos + take])
        pos += take
    return out


def logprob(prompt, continuation, vocab, table, tokens):
    ctx, total = prompt, 0.0
    for tok in tokenize(continuation, tokens):
        row = table.get(ctx)
        if row is None:
            total += -math.log(vocab)
        elif tok in row:
            total += math.log(row[tok])
        else:
            total += math.log(1.0 - sum(row.values())) - math.log(vocab)
        ctx += tok
    return total


def er(pt, p, r):
    return sum(a * math.log(a / b) for a, b in zip(pt, p) if a / b > r)


def kl(pt, p):
    return sum(a * math.log(a / b) for a, b in zip(pt, p))


def median(xs):
    xs = sorted(xs)
    n = len(xs)
    pos = 0.5 * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    return xs[lo] + (pos - lo) * (xs[hi] - xs[lo])


def compute(fixture_dir, config_name):
    with open(os.path.join(fixture_dir, config_name)) as f:
        cfg = json.load(f)
    vocab, _, table = load_table(os.path.join(fixture_dir, cfg["backend"]["mock_table"]))
    tokens = {t for row in table.values() for t in row}
    with open(os.path.join(fixture_dir, cfg["prompts"])) as f:
        prompts = [p["text"] if isinstance(p, dict) else p for p in json.load(f)["prompts"]]
    with open(os.path.join(fixture_dir, cfg["aliases"])) as f:
        aliases = json.load(f)
    counts = {}
    with open(os.path.join(fixture_dir, cfg["population"])) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("country,"):
                continue
            name, n = line.split(",")
            counts[name] = int(n)
    names = [n for n in aliases if n in counts]
    total = sum(counts[n] for n in names)
    pt = [counts[n] / total for n in names]

    dists, weights = [], []
    for c in prompts:
        masses = []
        for n in names:
            forms = [n] + [a for a in aliases[n] if a != n]
            masses.append(sum(math.exp(logprob(c, " " + a, vocab, table, tokens)) for a in forms))
        s = sum(masses)
        dists.append([m / s for m in masses])
        weights.append(logprob("", c, vocab, table, tokens))
    top = max(weights)
    w = [math.exp(x - top) for x in weights]
    w = [x / sum(w) for x in w]
    uni = [sum(d[i] for d in dists) / len(dists) for i in range(len(names))]
    model = [sum(w[k] * dists[k][i] for k in range(len(dists))) for i in range(len(names))]
    r = cfg.get("r", 3)
    sweep = []
    kls = [kl(pt, d) for d in dists]
    for rr in range(2, 21):
        sweep.append((rr, median([er(pt, d, rr) for d in dists]), median(kls)))
    best = min(sweep, key=lambda row: (abs(row[1] - row[2]), row[0]))[0]
    return {
        "names": names,
        "p_true": pt,
        "per_prompt_er": [er(pt, d, r) for d in dists],
        "average_er": sum(er(pt, d, r) for d in dists) / len(dists),
        "aggregate_uniform_er": er(pt, uni, r),
        "aggregate_model_er": er(pt, model, r),
        "aggregate_model_set": [n for n, a, b in zip(names, pt, model) if a / b > r],
        "ratios": [a / b for a, b in zip(pt, model)],
        "choose_r": best,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--fixtures", default=os.path.dirname(os.path.abspath(__file__)))
    ap.add_argument("--config", default="audit_config.json")
    ap.add_argument("--report")
    args = ap.parse_args()
    expected = compute(args.fixtures, args.config)
    if not args.report:
        json.dump(expected, sys.stdout, indent=2)
        print()
        return 0
    with open(args.report) as f:
        report = json.load(f)
    failures = []

    def close(what, a, b, tol=1e-9):
        if abs(a - b) > tol * max(1.0, abs(b)):
            failures.append(f"{what}: report {a!r} vs oracle {b!r}")

    s = report["summary"]
    close("average_er", s["average_er"], expected["average_er"])
    close("aggregate_uniform_er", s["aggregate_uniform_er"], expected["aggregate_uniform_er"])
    close("aggregate_model_er", s["aggregate_model_er"], expected["aggregate_model_er"])
    for k, p in enumerate(report["prompts"]):
        close(f"prompt {k} er", p["er"], expected["per_prompt_er"][k])
    for k, ratio in enumerate(report["per_country_ratios"]):
        close(f"ratio {k}", ratio, expected["ratios"][k])
    got_set = [e["country"] for e in report["aggregate_model"]["erasure_set"]]
    if got_set != expected["aggregate_model_set"]:
        failures.append(f"model erasure set {got_set} vs {expected['aggregate_model_set']}")
    for line in failures:
        print("MISMATCH", line)
    print("oracle agreement:", "ok" if not failures else f"{len(failures)} mismatches")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
