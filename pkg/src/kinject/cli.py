"""Command-line front end wiring all modules together."""

import json
import os
import sys

import click

from .captions import Granularity, apply_paraphrase, generate_corpus, write_corpus
from .encoder import load_params
from .errors import KinjectError
from .harness import (
    ExperimentConfig,
    EVAL_PROMPT_GRANULARITY,
    emit_report,
    load_result,
    run_experiment,
    run_single,
)
from .knowledge import default_knowledge_base, parse_knowledge_file
from .paraphrase import HttpParaphraseClient, ParaphraseConfig, identity_mock
from .seeding import hash64
from .textproc import read_vocab
from .world import WorldConfig, make_world, sample_dataset
from .zeroshot import build_prompt_pairs, evaluate, report_to_markdown


def _load_kb(kb_path):
    return parse_knowledge_file(kb_path) if kb_path else default_knowledge_base()


def _client(paraphrase):
    if paraphrase == "off":
        return None
    if paraphrase == "mock":
        return identity_mock()
    return HttpParaphraseClient(ParaphraseConfig(base_url=paraphrase, model_tag="endpoint-model"))


@click.group()
def main():
    """Knowledge-injected caption generation, contrastive training, and
    zero-shot evaluation on a synthetic world."""


@main.command("validate-kb")
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
def validate_kb(kb_path):
    """Parse and validate a knowledge file (default: shipped knowledge base)."""
    kb = _load_kb(kb_path)
    click.echo(f"ok: {len(kb.diseases)} diseases, {len(kb.phenotypes)} phenotypes")


@main.command("gen-captions")
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--granularity", type=click.Choice(["coarse", "medium", "fine"]), default="fine")
@click.option("--seed", type=int, default=0)
@click.option("--n", type=int, default=100, help="number of synthetic examples")
@click.option("--out", "out_dir", type=click.Path(), default="out")
@click.option("--paraphrase", default="off", help="off | mock | <base url>")
def gen_captions(kb_path, granularity, seed, n, out_dir, paraphrase):
    """Sample a synthetic dataset and write its caption corpus as JSONL."""
    kb = _load_kb(kb_path)
    world = make_world(WorldConfig(kb=kb, seed=seed))
    examples = sample_dataset(world, n, hash64(seed, "train"))
    pairs = [(ex.image_id, ex.present_disease_ids(kb)) for ex in examples]
    corpus = generate_corpus(
        kb, pairs, Granularity.from_string(granularity), hash64(seed, "captions", granularity)
    )
    client = _client(paraphrase)
    if client is not None:
        corpus, n_failed = apply_paraphrase(corpus, client)
        if n_failed:
            click.echo(f"warning: {n_failed} paraphrase failures kept template text", err=True)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "corpus.jsonl")
    write_corpus(path, corpus)
    click.echo(f"wrote {len(corpus)} captions to {path}")


@main.command("train")
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--granularity", type=click.Choice(["coarse", "medium", "fine", "human"]), default="fine")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default="out")
@click.option("--paraphrase", default="off", help="off | mock | <base url>")
def train_cmd(kb_path, granularity, seed, out_dir, paraphrase):
    """Train one model on captions at the chosen granularity; write artifacts."""
    kb = _load_kb(kb_path)
    cfg = ExperimentConfig(kb_path=kb_path, seeds=[seed], granularities=[granularity])
    result = run_single(kb, cfg, granularity, seed, out_dir, _client(paraphrase))
    click.echo(f"final epoch loss: {result.loss_trace[-1]:.4f}" if result.loss_trace else "no epochs run")
    click.echo(f"zero-shot average accuracy: {result.report.average:.4f}")


@main.command("eval")
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(exists=True), required=True,
              help="run directory holding checkpoint.json and vocab.txt")
@click.option("--n", type=int, default=1000, help="evaluation dataset size")
def eval_cmd(kb_path, seed, out_dir, n):
    """Evaluate a trained checkpoint on a fresh synthetic evaluation set."""
    kb = _load_kb(kb_path)
    params = load_params(os.path.join(out_dir, "checkpoint.json"))
    vocab = read_vocab(os.path.join(out_dir, "vocab.txt"))
    world = make_world(WorldConfig(kb=kb, seed=seed))
    examples = sample_dataset(world, n, hash64(seed, "eval"))
    prompts = build_prompt_pairs(kb, EVAL_PROMPT_GRANULARITY)
    report = evaluate(params, examples, prompts, vocab)
    click.echo(report_to_markdown(report, kb.disease_ids()))


@main.command("experiment")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--paraphrase", default=None, help="off | mock | <base url>")
def experiment_cmd(config_path, out_dir, paraphrase):
    """Run the full knowledge-density sweep and emit Table-shaped reports."""
    doc = {}
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    cfg = ExperimentConfig.from_dict(doc)
    if out_dir:
        cfg.output_dir = out_dir
    if paraphrase:
        cfg.paraphrase = paraphrase
    result = run_experiment(cfg)
    for arm in cfg.arms():
        click.echo(f"{arm}: mean average accuracy {result.mean_accuracy(arm):.4f}")
    for t in result.t_tests:
        click.echo(f"t({t.arm_a} vs {t.arm_b}) = {t.t:.4f}, df = {t.df}")
    click.echo(f"reports written under {cfg.output_dir}")


@main.command("report")
@click.option("--out", "out_dir", type=click.Path(exists=True), required=True,
              help="experiment output directory holding results.json")
@click.option("--format", "fmt", type=click.Choice(["csv", "markdown"]), default="csv")
def report_cmd(out_dir, fmt):
    """Re-emit reports (and summary figure) from a saved experiment result."""
    result = load_result(os.path.join(out_dir, "results.json"))
    written = emit_report(result, fmt, out_dir)
    for path in written:
        click.echo(f"wrote {path}")


def entry():
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except KinjectError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entry()
