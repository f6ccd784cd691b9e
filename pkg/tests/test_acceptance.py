"""End-to-end acceptance checks.

Each test covers one numbered criterion and prints a single
``[criterion N] PASS``/``FAIL`` line on the real terminal, bypassing
capture, so a scan of the output gives the verdict per criterion.
Tolerances are pinned as module constants next to the criteria that
use them.
"""

from __future__ import annotations

import math
import os
import random
import tempfile
import time

import numpy as np
import pytest

import oracles
from widop.engine import RuleEngine
from widop.geometry import Box3, DetectorConfig, PointCloud, ransac_lines_3d
from widop.kb import KnowledgeBase
from widop.pipeline import PipelineConfig, build_engine, run_all
from widop.planner import (
    RAW_INPUT,
    AlgorithmDescriptor,
    Characteristic,
    DataKind,
    PlanError,
    Registry,
    build_plan,
    characteristics_for_concept,
    default_registry,
    select_algorithms,
)
from widop.rules import format_rules, parse_rules
from widop.scene import SceneSpec, generate_scene, write_truth
from widop.topology import (
    RELATION_PROPERTIES,
    TopoConfig,
    connected,
    gap_distance,
    intersects,
    is_upper,
    touches,
)
from widop import domain
from widop.vrml import validate_vrml

# Pinned tolerances and budgets, one home for every magic number below.
ENGINE_RANDOM_INSTANCES = 220          # criterion asks for at least 200
ENGINE_TIME_BUDGET_S = 5.0
RANSAC_ANGLE_TOL_RAD = math.radians(1.0)
RANSAC_EXACT_TOL_RAD = 1e-6
RANSAC_MIN_HITS = 95
RANSAC_TIME_BUDGET_S = 10.0
BOX_PAIR_SAMPLES = 500
GAP_ABS_TOL = 1e-9
SCENE_TIME_BUDGET_S = 30.0
NOISY_SEEDS = 10
NOISY_SIGMA = 0.02
NOISY_CLUTTER = 0.05
NOISY_MEAN_FLOOR = 0.9


def _verdict(capfd, number: int, ok: bool, detail: str = "") -> None:
    with capfd.disabled():
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"[criterion {number}] {status}{suffix}", flush=True)
    assert ok, f"criterion {number} failed{': ' + detail if detail else ''}"


# -- criterion 1: forward chaining vs an independent naive evaluator -------------


def _uncle_kb() -> KnowledgeBase:
    kb = KnowledgeBase()
    for prop in ("hasParent", "hasBrother", "hasUncle"):
        kb.declare_property(prop, "object")
    kb.assert_object("a", "hasParent", "b")
    kb.assert_object("b", "hasBrother", "c")
    return kb


UNCLE_RULE = ("rule uncle: hasParent(?x, ?p) ^ hasBrother(?p, ?u)"
              " -> hasUncle(?x, ?u)")


def _random_instance(rng: random.Random) -> tuple[KnowledgeBase, list]:
    """A small KB plus builtin-free rules with head vars bound in the body.

    Individual-valued and literal-valued variables are tracked apart so
    a class or object-property head can never receive a literal.
    """
    kb = KnowledgeBase()
    concepts = [f"C{i}" for i in range(rng.randint(2, 5))]
    for i, name in enumerate(concepts):
        parent = rng.choice(concepts[:i]) if i and rng.random() < 0.5 else None
        kb.declare_concept(name, parent)
    obj_props = [f"p{i}" for i in range(rng.randint(1, 3))]
    data_props = [f"d{i}" for i in range(rng.randint(1, 2))]
    for prop in obj_props:
        kb.declare_property(prop, "object")
    for prop in data_props:
        kb.declare_property(prop, "data")
    individuals = [f"i{k}" for k in range(rng.randint(3, 20))]
    for ind in individuals:
        for concept in rng.sample(concepts, rng.randint(0, 2)):
            kb.assert_class(ind, concept)
    for _ in range(rng.randint(2, 12)):
        kb.assert_object(rng.choice(individuals), rng.choice(obj_props),
                         rng.choice(individuals))
    for _ in range(rng.randint(1, 8)):
        kb.assert_data(rng.choice(individuals), rng.choice(data_props),
                       float(rng.randint(0, 6)))

    def ind_term(bound: list[str]):
        if bound and rng.random() < 0.8:
            return f"?{rng.choice(bound)}"
        return rng.choice(individuals)

    rules_text = []
    for j in range(rng.randint(1, 5)):
        ind_vars: list[str] = []
        lit_vars: list[str] = []
        body = []

        def fresh_ind() -> str:
            var = f"x{len(ind_vars)}"
            ind_vars.append(var)
            return var

        def join_ind() -> str:
            # Reusing a bound variable keeps joins chain-shaped; a body
            # of fully-free pair atoms degenerates into cross products.
            if ind_vars and rng.random() < 0.7:
                return rng.choice(ind_vars)
            return fresh_ind()

        for _ in range(rng.randint(1, 3)):
            kind = rng.random()
            if kind < 0.4:
                body.append(f"{rng.choice(concepts)}(?{join_ind()})")
            elif kind < 0.75:
                subject = join_ind()
                body.append(f"{rng.choice(obj_props)}(?{subject},"
                            f" ?{fresh_ind()})")
            else:
                subject = join_ind()
                if rng.random() < 0.5:
                    v = f"v{len(lit_vars)}"
                    lit_vars.append(v)
                    obj = f"?{v}"
                else:
                    obj = str(rng.randint(0, 6))
                body.append(f"{rng.choice(data_props)}(?{subject}, {obj})")
        choice = rng.random()
        if choice < 0.45:
            head = f"{rng.choice(concepts)}({ind_term(ind_vars)})"
        elif choice < 0.8:
            head = (f"{rng.choice(obj_props)}({ind_term(ind_vars)},"
                    f" {ind_term(ind_vars)})")
        else:
            if lit_vars and rng.random() < 0.5:
                obj = f"?{rng.choice(lit_vars)}"
            else:
                obj = str(rng.randint(0, 6))
            head = f"{rng.choice(data_props)}({ind_term(ind_vars)}, {obj})"
        rules_text.append(f"rule r{j}: {' ^ '.join(body)} -> {head}")
    return kb, parse_rules("\n".join(rules_text))


def test_criterion_1_forward_chaining_matches_oracle(capfd) -> None:
    started = time.perf_counter()

    kb = _uncle_kb()
    rules = parse_rules(UNCLE_RULE)
    engine_kb = kb.copy()
    RuleEngine().evaluate(engine_kb, rules)
    assert engine_kb.query("a", "hasUncle", "c"), "uncle fact not derived"
    oracle_kb = oracles.apply_facts(kb, oracles.naive_fixpoint(kb, rules))
    assert engine_kb.serialize() == oracle_kb.serialize()

    rng = random.Random(19)
    mismatches = 0
    fired = 0
    for _ in range(ENGINE_RANDOM_INSTANCES):
        base, rules = _random_instance(rng)
        engine_kb = base.copy()
        RuleEngine().evaluate(engine_kb, rules)
        oracle_kb = oracles.apply_facts(base, oracles.naive_fixpoint(base, rules))
        if engine_kb.serialize() != oracle_kb.serialize():
            mismatches += 1
        if engine_kb.assertion_count() > base.assertion_count():
            fired += 1
    elapsed = time.perf_counter() - started
    assert fired > ENGINE_RANDOM_INSTANCES // 4, \
        f"generator too inert: only {fired} instances derived anything"
    _verdict(capfd, 1, mismatches == 0 and elapsed < ENGINE_TIME_BUDGET_S,
             f"{ENGINE_RANDOM_INSTANCES} instances, {mismatches} mismatches, "
             f"{elapsed:.2f}s")


# -- criterion 2: height and spacing rules on a hand-built KB --------------------


MAST_RULES = """
rule tall: Vertical_BoundingBox(?v) ^ hasHeight(?v, ?alt) ^ swrlb:moreThan(?alt, 6) -> Mast(?v)
rule chain: Mast(?m) ^ Vertical_BoundingBox(?v) ^ topo:isDistantFrom(?m, ?v, 50) -> Mast(?v)
"""


def test_criterion_2_mast_rules_on_three_boxes(capfd) -> None:
    kb = KnowledgeBase()
    kb.declare_concept("Vertical_BoundingBox")
    kb.declare_concept("Mast")
    kb.declare_property("hasHeight", "data")
    for name, x, height in (("vb1", 0.0, 7.0), ("vb2", 50.0, 5.5),
                            ("vb3", -56.0, 5.5)):
        kb.assert_class(name, "Vertical_BoundingBox")
        kb.assert_data(name, "hasHeight", height)
        kb.attach_geometry(name, Box3((x - 0.2, -0.2, 0.0),
                                      (x + 0.2, 0.2, height)))
    engine = build_engine()
    engine.evaluate(kb, parse_rules(MAST_RULES))
    masts = set(kb.instances_of("Mast"))
    _verdict(capfd, 2, masts == {"vb1", "vb2"}, f"masts={sorted(masts)}")


# -- criterion 3: line recovery under noise and outliers -------------------------


def test_criterion_3_ransac_line_recovery(capfd) -> None:
    truth = np.array([0.3, 0.2, 0.93])
    truth /= np.linalg.norm(truth)
    anchor = np.array([1.0, -2.0, 0.5])

    started = time.perf_counter()
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        t = rng.uniform(-3.0, 3.0, 200)
        inliers = anchor + t[:, None] * truth + rng.normal(0.0, 0.01, (200, 3))
        outliers = anchor + rng.uniform(-4.0, 4.0, (100, 3))
        cloud = PointCloud(np.vstack([inliers, outliers]))
        lines = ransac_lines_3d(cloud, DetectorConfig(seed=seed))
        if not lines:
            continue
        best = max(lines, key=lambda line: line.inlier_count)
        cosine = min(1.0, abs(float(np.dot(best.direction, truth))))
        if math.acos(cosine) <= RANSAC_ANGLE_TOL_RAD:
            hits += 1
    elapsed = time.perf_counter() - started

    t = np.linspace(-3.0, 3.0, 200)
    exact = PointCloud(anchor + t[:, None] * truth)
    exact_lines = ransac_lines_3d(exact, DetectorConfig(seed=0))
    exact_ok = len(exact_lines) == 1
    if exact_ok:
        cosine = min(1.0, abs(float(np.dot(exact_lines[0].direction, truth))))
        exact_ok = math.acos(cosine) <= RANSAC_EXACT_TOL_RAD

    _verdict(capfd, 3,
             hits >= RANSAC_MIN_HITS and exact_ok
             and elapsed < RANSAC_TIME_BUDGET_S,
             f"{hits}/100 within 1 deg, exact_ok={exact_ok}, {elapsed:.2f}s")


# -- criterion 4: box relations vs a scalar interval oracle ----------------------


def _random_box_pair(rng: np.random.Generator) -> tuple[Box3, Box3]:
    lo1 = rng.uniform(-5.0, 5.0, 3)
    sz1 = rng.uniform(0.05, 3.0, 3)
    if rng.random() < 0.4:
        # Bias toward the touch boundary along one axis.
        axis = rng.integers(0, 3)
        lo2 = lo1.copy()
        lo2[axis] = lo1[axis] + sz1[axis] + rng.uniform(-0.05, 0.2)
        sz2 = rng.uniform(0.05, 3.0, 3)
    else:
        lo2 = rng.uniform(-5.0, 5.0, 3)
        sz2 = rng.uniform(0.05, 3.0, 3)
    return (Box3(tuple(lo1), tuple(lo1 + sz1)),
            Box3(tuple(lo2), tuple(lo2 + sz2)))


def test_criterion_4_box_relations_match_oracle(capfd) -> None:
    config = TopoConfig()
    rng = np.random.default_rng(42)
    bad = 0
    for _ in range(BOX_PAIR_SAMPLES):
        b1, b2 = _random_box_pair(rng)
        expected = oracles.box_relations(b1.min_corner, b1.max_corner,
                                         b2.min_corner, b2.max_corner,
                                         config.touch_epsilon,
                                         config.overlap_epsilon)
        ok = (intersects(b1, b2, config) == expected["intersect"]
              and touches(b1, b2, config) == expected["touch"]
              and connected(b1, b2, config) == expected["connected"]
              and is_upper(b1, b2, config) == expected["upper"]
              and abs(gap_distance(b1, b2) - expected["gap"]) <= GAP_ABS_TOL)
        # Symmetry of the symmetric relations, and touch excludes overlap.
        ok = ok and intersects(b2, b1, config) == intersects(b1, b2, config)
        ok = ok and touches(b2, b1, config) == touches(b1, b2, config)
        ok = ok and connected(b2, b1, config) == connected(b1, b2, config)
        ok = ok and not (touches(b1, b2, config) and intersects(b1, b2, config))
        swapped = oracles.box_relations(b2.min_corner, b2.max_corner,
                                        b1.min_corner, b1.max_corner,
                                        config.touch_epsilon,
                                        config.overlap_epsilon)
        ok = ok and is_upper(b2, b1, config) == swapped["upper"]
        if not ok:
            bad += 1

    kb = KnowledgeBase()
    boxes = []
    rng2 = np.random.default_rng(7)
    for i in range(10):
        base = float(i) * 0.8
        lo = rng2.uniform(-2.0, 2.0, 3) + np.array([base, 0.0, 0.0])
        box = Box3(tuple(lo), tuple(lo + rng2.uniform(0.1, 2.5, 3)))
        boxes.append(box)
        kb.attach_geometry(f"det{i}", box)
    from widop.topology import qualify_all
    qualify_all(kb, config)
    pair_bad = 0
    for i, bi in enumerate(boxes):
        for j, bj in enumerate(boxes):
            if i == j:
                continue
            expected = oracles.box_relations(bi.min_corner, bi.max_corner,
                                             bj.min_corner, bj.max_corner,
                                             config.touch_epsilon,
                                             config.overlap_epsilon)
            key = {"Intersect": "intersect", "Touch": "touch",
                   "Upper": "upper", "Connected": "connected"}
            for prop in RELATION_PROPERTIES:
                have = bool(kb.query(f"det{i}", prop, f"det{j}"))
                if have != expected[key[prop]]:
                    pair_bad += 1
    _verdict(capfd, 4, bad == 0 and pair_bad == 0,
             f"{BOX_PAIR_SAMPLES} pairs, {bad} mismatches, "
             f"{pair_bad} qualify mismatches")


# -- criterion 5: planning ------------------------------------------------------


def _random_valid_registry(rng: random.Random) -> Registry:
    """Registry whose data kinds each have a unique producer, so every
    selection orders without ambiguity."""
    registry = Registry()
    unproduced = [k for k in DataKind if k is not RAW_INPUT]
    rng.shuffle(unproduced)
    produced: dict[DataKind, str] = {}
    names: list[str] = []
    traits = list(Characteristic)
    for i in range(rng.randint(3, 6)):
        name = f"step{i}"
        inputs: list[DataKind] = []
        available = list(produced)
        if available and rng.random() < 0.7:
            inputs.append(rng.choice(available))
        if not inputs or rng.random() < 0.5:
            inputs.append(RAW_INPUT)
        outputs = []
        if unproduced:
            outputs.append(unproduced.pop())
        if not outputs:
            break
        successor = rng.choice(names) if names and rng.random() < 0.4 else None
        registry.register(AlgorithmDescriptor(
            name, tuple(inputs), tuple(outputs),
            frozenset(rng.sample(traits, rng.randint(1, 2))), successor))
        names.append(name)
        for kind in outputs:
            produced[kind] = name
    return registry


def test_criterion_5_planning(capfd) -> None:
    kb = domain.load_domain_kb()
    traits = characteristics_for_concept(kb, "Mast")
    plan = build_plan(default_registry(), select_algorithms(default_registry(),
                                                            traits))
    order = plan.step_names()
    chain_ok = (order[:2] == ["VerticalObjectsDetection", "Segmentation2D"]
                and set(order[2:]) == {"BoundingBox", "ApproximateHeight",
                                       "RANSACLineDetection"})

    rng = random.Random(7)
    random_bad = 0
    nontrivial = 0
    for _ in range(200):
        registry = _random_valid_registry(rng)
        wanted = set(rng.sample(list(Characteristic), rng.randint(1, 2)))
        selected = select_algorithms(registry, wanted)
        if not selected:
            continue
        nontrivial += 1
        out = build_plan(registry, selected)
        problems = oracles.order_violations(
            out.step_names(), set(selected),
            {d.name: d.successor for d in registry},
            {d.name: d.inputs for d in registry},
            {d.name: d.outputs for d in registry},
            {RAW_INPUT})
        if problems:
            random_bad += 1

    cyclic = Registry()
    cyclic.register(AlgorithmDescriptor(
        "loop_a", (DataKind.LINE_3D,), (DataKind.NUMBER,),
        frozenset({Characteristic.LINES_3D})))
    cyclic.register(AlgorithmDescriptor(
        "loop_b", (DataKind.NUMBER,), (DataKind.LINE_3D,),
        frozenset({Characteristic.LINES_3D})))
    with pytest.raises(PlanError):
        build_plan(cyclic, ["loop_a", "loop_b"])

    _verdict(capfd, 5,
             chain_ok and random_bad == 0 and nontrivial >= 100,
             f"mast={order}, {nontrivial} random plans, {random_bad} invalid")


# -- criteria 6 and 7: end-to-end scene scoring ----------------------------------


def _score_scene(sigma: float, clutter: float, seed: int) -> tuple[float, float]:
    scene = generate_scene(SceneSpec(noise_sigma=sigma,
                                     clutter_fraction=clutter, seed=seed))
    with tempfile.TemporaryDirectory() as tmp:
        cloud_path = os.path.join(tmp, "scene.xyz")
        truth_path = os.path.join(tmp, "truth.json")
        np.savetxt(cloud_path, scene.cloud.points, fmt="%.6f")
        write_truth(truth_path, scene.truth)
        result = run_all(PipelineConfig(
            cloud_path=cloud_path,
            truth_path=truth_path,
            detector=DetectorConfig(vertical_extent_threshold=0.3, seed=seed),
            strict=True))
    evaluation = result.evaluation
    return evaluation.precision, evaluation.recall


def test_criterion_6_noiseless_scene_perfect_score(capfd) -> None:
    started = time.perf_counter()
    precision, recall = _score_scene(0.0, 0.0, 0)
    elapsed = time.perf_counter() - started
    _verdict(capfd, 6,
             precision == 1.0 and recall == 1.0
             and elapsed < SCENE_TIME_BUDGET_S,
             f"P={precision:.3f} R={recall:.3f} {elapsed:.1f}s")


def test_criterion_7_noisy_scenes_mean_scores(capfd) -> None:
    precisions = []
    recalls = []
    for seed in range(NOISY_SEEDS):
        precision, recall = _score_scene(NOISY_SIGMA, NOISY_CLUTTER, seed)
        precisions.append(precision)
        recalls.append(recall)
    mean_p = sum(precisions) / len(precisions)
    mean_r = sum(recalls) / len(recalls)
    _verdict(capfd, 7,
             mean_p >= NOISY_MEAN_FLOOR and mean_r >= NOISY_MEAN_FLOOR,
             f"mean P={mean_p:.3f} mean R={mean_r:.3f} over {NOISY_SEEDS} seeds")


# -- criterion 8: determinism and round-trips ------------------------------------


def test_criterion_8_determinism_and_round_trips(capfd, tmp_path) -> None:
    scene = generate_scene(SceneSpec(track_length=150.0, seed=5))
    again = generate_scene(SceneSpec(track_length=150.0, seed=5))
    assert np.array_equal(scene.cloud.points, again.cloud.points)

    cloud_path = tmp_path / "scene.xyz"
    np.savetxt(cloud_path, scene.cloud.points, fmt="%.6f")
    out_kb = tmp_path / "out.kb"
    out_vrml = tmp_path / "out.wrl"
    config = PipelineConfig(
        cloud_path=str(cloud_path), out_kb=str(out_kb),
        out_vrml=str(out_vrml),
        detector=DetectorConfig(vertical_extent_threshold=0.3))
    first = run_all(config)
    second = run_all(config)
    assert first.detected_count > 0, "scene produced no detections"
    rerun_ok = (first.kb.serialize() == second.kb.serialize()
                and first.vrml_text == second.vrml_text)

    serialized = first.kb.serialize()
    kb_ok = (KnowledgeBase.deserialize(serialized).serialize() == serialized
             and out_kb.read_text(encoding="utf-8") == serialized)

    rules = domain.load_default_rules().rules
    formatted = format_rules(rules)
    reparsed = parse_rules(formatted)
    rules_ok = (list(reparsed) == list(rules)
                and format_rules(reparsed) == formatted)

    vrml_text = out_vrml.read_text(encoding="utf-8")
    vrml_ok = (vrml_text == first.vrml_text
               and vrml_text.startswith("#VRML V2.0 utf8")
               and validate_vrml(vrml_text) == [])

    _verdict(capfd, 8, rerun_ok and kb_ok and rules_ok and vrml_ok,
             f"rerun={rerun_ok} kb={kb_ok} rules={rules_ok} vrml={vrml_ok}")
