"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict; the lines are printed in the
pytest terminal summary, or directly when this file is run as a script.
"""

import itertools
import json
import sys
import time

import httpx
import numpy as np

from calsynth import calibrators as cal
from calsynth import llm
from calsynth.bounds import (
    accuracy_uncertainty, decomposition_check, ece_bound, ece_min_sample_size, min_sample_size,
    simulate_hoeffding,
)
from calsynth.metrics import BinningConfig, DiagramMode, PredictionRecord, bin_records
from calsynth.targeting import (
    AssemblyMode, Quadrant, assemble, build_generation_specs, percent, target_probability,
)
from calsynth.toy import ExperimentConfig, run_experiment

from conftest import fixture_dataset, golden, load_task, random_records
from test_bounds import paired_diagrams
from test_calibrators import min_sse_on_grid, synthetic_pairs
from test_metrics import oracle_ece

VERDICTS: dict[int, str] = {}


def verdict(number: int, title: str, ok: bool, detail: str):
    VERDICTS[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number} {title}: {detail}"
    assert ok, VERDICTS[number]


def test_criterion_1_ece_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n, m = int(rng.integers(1, 51)), int(rng.integers(2, 11))
        records = random_records(rng, n)
        d = bin_records(records, BinningConfig(m))
        ref = oracle_ece([r.score for r in records], [int(r.true_label) for r in records], m)
        worst = max(worst, abs(d.ece - ref))
    elapsed = time.perf_counter() - start
    verdict(1, "ECE oracle equivalence", worst <= 1e-12 and elapsed < 5,
            f"max |diff| {worst:.2e} over 1000 datasets in {elapsed:.2f}s")


def test_criterion_2_bound_formulas():
    n1 = min_sample_size(0.1, 0.05)
    n2 = ece_min_sample_size(0.07, 0.1, 0.02)
    report = ece_bound(0.05, 738, 0.02)
    ok = (n1 == 185 and n2 == 738 and report.delta_ece == 2 * report.delta_a
          and report.epsilon_ece == 0.05 + 0.02)
    verdict(2, "bound formulas", ok,
            f"min_n={n1}, ece_min_n={n2}, delta_ece/delta_a={report.delta_ece / report.delta_a}")


def test_criterion_3_hoeffding_monte_carlo():
    start = time.perf_counter()
    base = simulate_hoeffding(0.7, 200, 0.1, 10000, seed=7)
    ok = base <= 0.036631
    rng = np.random.default_rng(3)
    for seed in range(10):
        p, n, eps = float(rng.uniform(0.05, 0.95)), int(rng.integers(20, 500)), \
            float(rng.uniform(0.03, 0.2))
        ok &= simulate_hoeffding(p, n, eps, 10000, seed) <= accuracy_uncertainty(eps, n)
    elapsed = time.perf_counter() - start
    verdict(3, "Hoeffding Monte Carlo", ok and elapsed < 10,
            f"base frequency {base:.4f} <= 0.036631, 10 fuzzed cases, {elapsed:.2f}s")


def test_criterion_4_decomposition():
    rng = np.random.default_rng(4)
    failures = 0
    for _ in range(1000):
        a, b = paired_diagrams(rng, int(rng.integers(2, 21)), int(rng.integers(1, 300)))
        failures += not decomposition_check(a, b).holds
    verdict(4, "bin-wise decomposition inequality", failures == 0,
            f"{1000 - failures}/1000 fuzzed pairs hold")


def test_criterion_5_toy_reproduction():
    start = time.perf_counter()
    acc_ok = ece_down = slope_up = 0
    for seed in range(20):
        report = run_experiment(ExperimentConfig(n=300, range=(-10.0, 10.0), beta_true=(-1.0, 2.0),
                                                 num_bins=5, threshold=0.03, seed=seed))
        first, last = report.initial, report.final
        acc_ok += 0.90 <= first.acc <= 0.99
        ece_down += last.ece < first.ece
        slope_up += last.beta1 > first.beta1
    elapsed = time.perf_counter() - start
    ok = acc_ok >= 18 and ece_down >= 16 and slope_up >= 14 and elapsed < 30
    verdict(5, "toy reproduction", ok,
            f"stage-0 ACC in range {acc_ok}/20 (need 18), final ECE lower {ece_down}/20 "
            f"(need 16), final slope higher {slope_up}/20 (need 14), {elapsed:.2f}s")


def test_criterion_6_targeting_goldens():
    cases = [
        ("tc", 0.75, Quadrant.HIGH_OVER, 0.10, 0.65, "65% to complaint"),
        ("b77", 0.65, Quadrant.HIGH_UNDER, 0.20, 0.85, "85% to age_limit"),
        ("se", 0.75, Quadrant.HIGH_OVER, 0.20, 0.55, "55% to negative"),
    ]
    problems = []
    for name, conf, quad, alpha, expected, fragment in cases:
        p = target_probability(conf, quad, alpha)
        if abs(p - expected) > 1e-12:
            problems.append(f"{name}: {p}")
        task = load_task(name)
        req = llm.GenRequest("x", percent(conf), percent(p), task.class_a, task.class_b)
        if fragment not in llm.build_generation_prompt(req):
            problems.append(f"{name}: prompt lacks {fragment!r}")
    verdict(6, "targeting goldens", not problems, "; ".join(problems) or "0.65, 0.85, 0.55")


def test_criterion_7_calibrators():
    rng = np.random.default_rng(7)
    t = rng.uniform(0.05, 20.0, size=100_000)
    s = rng.uniform(0.0, 1.0, size=100_000)
    s = s[np.abs(s - 0.5) >= 1e-9]
    out = cal.sigmoid(cal.logit(s) / t[: len(s)])
    argmax_ok = bool(np.all(np.sign(out - 0.5) == np.sign(s - 0.5)))

    pava_ok = True
    coarse = [k / 10 for k in range(11)]
    for n in range(1, 9):
        for y in itertools.product((0, 1), repeat=n):
            err = float(np.sum((np.asarray(y) - cal.pava(y)) ** 2))
            pava_ok &= err <= min_sse_on_grid(y, coarse) + 1e-12

    temps = []
    for sharpen in (1.0, 2.0):
        pairs = synthetic_pairs(np.random.default_rng(int(sharpen * 100)), 5000, sharpen)
        temps.append(cal.fit_temperature(pairs).t)
    temp_ok = abs(temps[0] - 1) <= 0.1 and abs(temps[1] - 2) <= 0.1
    exact = cal.apply_temperature(cal.Temperature(2.0), 0.9)
    ok = argmax_ok and pava_ok and temp_ok and exact == 0.75
    verdict(7, "calibrators", ok,
            f"argmax kept={argmax_ok}, PAVA optimal={pava_ok}, "
            f"t fits=({temps[0]:.3f}, {temps[1]:.3f}), apply(2, 0.9)={exact!r}")


def test_criterion_8_prompt_goldens():
    rows = {
        "tc": ("@UbisoftSupport When will u guys fix the jager glitch?", 75, 65),
        "b77": ("Can my teenager have an account?", 65, 85),
        "se": ("The zoom function on this camera is so loud that sometimes you will be unable to "
               "use it if you find yourself in a situation where you must be quiet.", 75, 55),
    }
    mismatches = []
    for name, (text, p, q) in rows.items():
        task = load_task(name)
        if llm.build_system_prompt(task) != golden(f"system_{name}.txt"):
            mismatches.append(f"system_{name}")
        req = llm.GenRequest(text, p, q, task.class_a, task.class_b)
        if llm.build_generation_prompt(req) != golden(f"generation_{name}.txt"):
            mismatches.append(f"generation_{name}")

    captured = []

    def handler(request: httpx.Request) -> httpx.Response:
        captured.append(request.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    backend = llm.BackendConfig(kind="http", endpoint="http://stub.local/v1/chat/completions",
                                model="Llama-2-7b-chat-hf")
    task = load_task("tc")
    req = llm.GenRequest(rows["tc"][0], 75, 65, task.class_a, task.class_b)
    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        llm.chat_complete(backend, llm.generation_messages(task, req), client)
    body = json.loads(captured[0])
    expected = {"model": "Llama-2-7b-chat-hf", "temperature": 0.1,
                "messages": [{"role": "system", "content": golden("system_tc.txt")},
                             {"role": "user", "content": golden("generation_tc.txt")}]}
    if body != expected or b'"temperature": 0.1' not in captured[0]:
        mismatches.append("request body")
    verdict(8, "prompt goldens", not mismatches,
            "mismatch in " + ", ".join(mismatches) if mismatches
            else "6 prompt files byte-identical, request body carries temperature 0.1")


def test_criterion_9_offline_pipeline():
    task = load_task("tc")
    names = {"1": task.class_a, "0": task.class_b}
    records = [PredictionRecord(r.id, r.score, names[r.true_label], r.text)
               for r in fixture_dataset(n=100)]
    diagram = bin_records(records, BinningConfig(10, DiagramMode.SCORE, task.labels))
    specs = build_generation_specs(diagram, records, labels=task.labels)
    synthetic = llm.two_stage(specs, task, llm.BackendConfig(), strict=True)
    s2 = sum(spec.sample_count for spec in specs)

    replaced = assemble(records, synthetic, specs, AssemblyMode.SYNTHESIS, strict=True)
    plus = assemble(records, synthetic, specs, AssemblyMode.SYNTHESIS_PLUS, strict=True)
    exemplar_ids = {r.id for spec in specs for r in spec.exemplars}
    kept_ids = {item.id for item in replaced}
    ok = (bool(specs) and len(synthetic) == s2 and len(replaced) == len(records)
          and not exemplar_ids & kept_ids and len(plus) == len(records) + s2
          and not any("%" in (item.text or "") for item in replaced + plus))
    verdict(9, "offline pipeline", ok,
            f"{len(specs)} target bins, S2={s2}, Synthesis size {len(replaced)}/{len(records)}, "
            f"Synthesis+ size {len(plus)}")


if __name__ == "__main__":
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_criterion_")]
    failed = 0
    for fn in tests:
        try:
            fn()
        except AssertionError:
            failed += 1
        number = int(fn.__name__.split("_")[2])
        print(VERDICTS.get(number, f"FAIL  criterion {number}: errored"))
    sys.exit(1 if failed else 0)
