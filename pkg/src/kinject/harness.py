"""Experiment harness: seed sweeps over caption granularities, paired
t-tests between arms, and report emission (CSV, markdown, figure)."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .captions import Granularity, apply_paraphrase, generate_corpus, write_corpus
from .encoder import TrainConfig, init_params, save_params, train, write_loss_trace
from .errors import ConfigError
from .knowledge import default_knowledge_base, parse_knowledge_file
from .paraphrase import HttpParaphraseClient, ParaphraseConfig, identity_mock
from .seeding import hash64
from .textproc import build_vocab, encode_ids, tokenize, write_vocab
from .world import WorldConfig, make_world, sample_dataset
from .zeroshot import (
    AccuracyReport,
    T_CRITICAL,
    abbreviation,
    build_prompt_pairs,
    evaluate,
    paired_t_test,
)

# The human-caption arm is an emulation: medium-granularity rendering with
# random phenotype dropout, which behaves like a coarse-leaning source.
HUMAN_ARM = "human"
HUMAN_DROPOUT = 0.5

EVAL_PROMPT_GRANULARITY = Granularity.MEDIUM


@dataclass
class ExperimentConfig:
    kb_path: str = None
    world: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    granularities: list = field(default_factory=lambda: ["coarse", "medium", "fine"])
    n_train: int = 2000
    n_eval: int = 1000
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    paraphrase: str = "off"  # off | mock | <base url>
    include_human_baseline: bool = False
    output_dir: str = "out"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        batch_size = self.train.get("batch_size", TrainConfig().batch_size)
        if self.n_train < batch_size:
            raise ConfigError("n_train must be >= train.batch_size")
        known = {"coarse", "medium", "fine", HUMAN_ARM}
        for g in self.arms():
            if g not in known:
                raise ConfigError(f"unknown granularity arm: {g!r}")

    def arms(self):
        arms = list(self.granularities)
        if self.include_human_baseline and HUMAN_ARM not in arms:
            arms.append(HUMAN_ARM)
        return arms

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc):
        allowed = {f.name for f in dataclasses.fields(cls)}
        extra = set(doc) - allowed
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)


@dataclass
class ArmResult:
    arm: str
    seed: int
    report: AccuracyReport
    loss_trace: list


@dataclass
class TTestResult:
    arm_a: str
    arm_b: str
    t: float
    df: int


@dataclass
class ExperimentResult:
    disease_order: list
    arm_results: list  # ArmResult, arm-major then seed order
    t_tests: list

    def accuracies(self, arm):
        return [r.report.average for r in self.arm_results if r.arm == arm]

    def mean_accuracy(self, arm):
        return float(np.mean(self.accuracies(arm)))


def _arm_render_args(arm):
    if arm == HUMAN_ARM:
        return Granularity.MEDIUM, HUMAN_DROPOUT
    return Granularity.from_string(arm), 0.0


def _paraphrase_client(cfg):
    if cfg.paraphrase == "off":
        return None
    if cfg.paraphrase == "mock":
        return identity_mock()
    return HttpParaphraseClient(
        ParaphraseConfig(base_url=cfg.paraphrase, model_tag="endpoint-model")
    )


def run_single(kb, cfg, arm, seed, out_dir=None, client=None):
    """Train and evaluate one (arm, seed) cell; optionally write artifacts."""
    granularity, dropout = _arm_render_args(arm)
    world_cfg = WorldConfig(kb=kb, seed=seed, **cfg.world)
    world = make_world(world_cfg)
    train_ds = sample_dataset(world, cfg.n_train, hash64(seed, "train"))
    eval_ds = sample_dataset(world, cfg.n_eval, hash64(seed, "eval"))

    pairs = [(ex.image_id, ex.present_disease_ids(kb)) for ex in train_ds]
    corpus = generate_corpus(kb, pairs, granularity, hash64(seed, "captions", arm), dropout)
    n_failed = 0
    if client is not None:
        corpus, n_failed = apply_paraphrase(corpus, client)

    vocab = build_vocab(corpus)
    train_cfg = TrainConfig(seed=hash64(seed, "init"), **cfg.train)
    params = init_params(train_cfg, len(vocab), world_cfg.feature_dim)
    train_pairs = [
        (ex.features, encode_ids(vocab, tokenize(rec.text)))
        for ex, rec in zip(train_ds, corpus)
    ]
    trained, trace = train(params, train_pairs, train_cfg)

    prompts = build_prompt_pairs(kb, EVAL_PROMPT_GRANULARITY)
    report = evaluate(trained, eval_ds, prompts, vocab)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_corpus(os.path.join(out_dir, "corpus.jsonl"), corpus)
        write_vocab(os.path.join(out_dir, "vocab.txt"), vocab)
        save_params(os.path.join(out_dir, "checkpoint.json"), trained)
        write_loss_trace(os.path.join(out_dir, "loss_trace.csv"), trace)
        if n_failed:
            with open(os.path.join(out_dir, "paraphrase_failures.txt"), "w") as fh:
                fh.write(f"{n_failed}\n")
    return ArmResult(arm=arm, seed=seed, report=report, loss_trace=trace)


def run_experiment(cfg: ExperimentConfig):
    """Full sweep: every (arm, seed) cell plus pairwise t-tests across seeds.

    All artifacts land under cfg.output_dir; reruns with the same config are
    byte-identical.
    """
    kb = parse_knowledge_file(cfg.kb_path) if cfg.kb_path else default_knowledge_base()
    client = _paraphrase_client(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)

    arm_results = []
    for arm in cfg.arms():
        for seed in cfg.seeds:
            run_dir = os.path.join(cfg.output_dir, "runs", f"{arm}_seed{seed}")
            arm_results.append(run_single(kb, cfg, arm, seed, run_dir, client))

    t_tests = []
    if len(cfg.seeds) >= 2:
        arms = cfg.arms()
        by_arm = {
            arm: [r.report.average for r in arm_results if r.arm == arm] for arm in arms
        }
        for i, a in enumerate(arms):
            for b in arms[i + 1 :]:
                t, df = paired_t_test(by_arm[a], by_arm[b])
                t_tests.append(TTestResult(arm_a=a, arm_b=b, t=t, df=df))

    result = ExperimentResult(
        disease_order=kb.disease_ids(), arm_results=arm_results, t_tests=t_tests
    )
    emit_report(result, "csv", cfg.output_dir)
    emit_report(result, "markdown", cfg.output_dir)
    save_result(os.path.join(cfg.output_dir, "results.json"), result)
    _write_manifest(cfg)
    return result


def _write_manifest(cfg):
    entries = []
    for root, _, files in os.walk(cfg.output_dir):
        for name in sorted(files):
            if name == "manifest.json":
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, cfg.output_dir)
            with open(path, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            entries.append({"path": rel, "sha256": digest})
    entries.sort(key=lambda e: e["path"])
    config_digest = hashlib.sha256(
        json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    ).hexdigest()
    doc = {"config": cfg.to_dict(), "config_sha256": config_digest, "files": entries}
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_result(path, result):
    doc = {
        "disease_order": result.disease_order,
        "arm_results": [
            {
                "arm": r.arm,
                "seed": r.seed,
                "per_class_accuracy": r.report.per_class_accuracy,
                "average": r.report.average,
                "n_examples": r.report.n_examples,
                "loss_trace": r.loss_trace,
            }
            for r in result.arm_results
        ],
        "t_tests": [
            {"arm_a": t.arm_a, "arm_b": t.arm_b, "t": t.t, "df": t.df} for t in result.t_tests
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_result(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    arm_results = [
        ArmResult(
            arm=r["arm"],
            seed=r["seed"],
            report=AccuracyReport(
                per_class_accuracy=r["per_class_accuracy"],
                average=r["average"],
                n_examples=r["n_examples"],
            ),
            loss_trace=r["loss_trace"],
        )
        for r in doc["arm_results"]
    ]
    t_tests = [TTestResult(t["arm_a"], t["arm_b"], t["t"], t["df"]) for t in doc["t_tests"]]
    return ExperimentResult(
        disease_order=doc["disease_order"], arm_results=arm_results, t_tests=t_tests
    )


def _result_rows(result):
    """(arm, seed_label, values) rows: one per run plus one mean row per arm."""
    rows = []
    arms = []
    for r in result.arm_results:
        if r.arm not in arms:
            arms.append(r.arm)
    for arm in arms:
        runs = [r for r in result.arm_results if r.arm == arm]
        for r in runs:
            values = [r.report.per_class_accuracy[d] for d in result.disease_order]
            rows.append((arm, str(r.seed), values + [r.report.average]))
        mean_values = [
            float(np.mean([r.report.per_class_accuracy[d] for r in runs]))
            for d in result.disease_order
        ]
        rows.append((arm, "mean", mean_values + [float(np.mean([r.report.average for r in runs]))]))
    return rows


def emit_report(result, fmt, out_dir):
    """Write the sweep table as CSV or markdown, t-tests, and a summary figure."""
    if not result.arm_results:
        raise ConfigError("cannot emit a report for an empty result")
    os.makedirs(out_dir, exist_ok=True)
    header = ["granularity", "seed"] + [abbreviation(d) for d in result.disease_order] + ["Avg"]
    rows = _result_rows(result)
    written = []

    if fmt == "csv":
        path = os.path.join(out_dir, "results.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for arm, seed, values in rows:
                fh.write(",".join([arm, seed] + [f"{v:.6f}" for v in values]) + "\n")
        written.append(path)
        tt_path = os.path.join(out_dir, "t_tests.csv")
        with open(tt_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("arm_a,arm_b,t,df,significant_p05,significant_p01\n")
            for t in result.t_tests:
                s05 = abs(t.t) > T_CRITICAL[0.05][t.df]
                s01 = abs(t.t) > T_CRITICAL[0.01][t.df]
                fh.write(f"{t.arm_a},{t.arm_b},{t.t:.6f},{t.df},{s05},{s01}\n")
        written.append(tt_path)
    elif fmt == "markdown":
        path = os.path.join(out_dir, "results.md")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("| " + " | ".join(header) + " |\n")
            fh.write("|" + "---|" * len(header) + "\n")
            for arm, seed, values in rows:
                cells = [arm, seed] + [f"{v:.6f}" for v in values]
                fh.write("| " + " | ".join(cells) + " |\n")
            if result.t_tests:
                fh.write("\nPaired t-tests over seeds (average accuracy):\n\n")
                fh.write("| arm a | arm b | t | df |\n|---|---|---|---|\n")
                for t in result.t_tests:
                    fh.write(f"| {t.arm_a} | {t.arm_b} | {t.t:.6f} | {t.df} |\n")
        written.append(path)
    else:
        raise ConfigError(f"unknown report format: {fmt!r}")

    written.append(_emit_figure(result, out_dir))
    return written


def _emit_figure(result, out_dir):
    arms = []
    for r in result.arm_results:
        if r.arm not in arms:
            arms.append(r.arm)
    means = [result.mean_accuracy(a) for a in arms]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(len(arms)), means, color="#4878b0", alpha=0.8, zorder=2)
    for i, arm in enumerate(arms):
        ys = result.accuracies(arm)
        ax.scatter([i] * len(ys), ys, color="black", s=12, zorder=3)
    ax.set_xticks(range(len(arms)))
    ax.set_xticklabels(arms)
    ax.set_ylabel("average per-class accuracy")
    ax.set_ylim(0, 1)
    ax.grid(axis="y", alpha=0.3, zorder=0)
    fig.tight_layout()
    path = os.path.join(out_dir, "accuracy_by_arm.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
