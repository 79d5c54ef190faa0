"""Command-line pipelines: gen, load, serialize, plan, analyze, quantize,
audit, privacy, metrics.  Every run writes a manifest; quality and privacy
scores are report contents, never exit failures."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import audit as audit_mod
from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import planner, privacy, serializer, vq
from .analyzer import CostModel, analysis_report, validate_plan
from .manifest import write_manifest
from .vocab import Vocabulary, build_vocabulary


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _parse_shape(text: str) -> tuple[int, int]:
    try:
        n, d = text.lower().split("x")
        return int(n), int(d)
    except ValueError:
        _fail(f"expected NxD shape, got {text!r}")


@click.group()
def main():
    """Deterministic EHR serialization, encoder planning, and audit pipelines."""


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Generator config JSON; omitted = built-in default config.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--n-patients", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def gen(config_path, seed, n_patients, out_dir):
    """Generate a deterministic synthetic corpus."""
    try:
        if config_path is None:
            config = corpus_mod.default_config()
        else:
            config = corpus_mod.load_generator_config(config_path)
        if seed is not None:
            config = corpus_mod.with_seed(config, seed)
        if n_patients is not None:
            from dataclasses import replace
            config = replace(config, n_patients=n_patients)
        config.validate()
        corpus = corpus_mod.generate_corpus(config)
    except (corpus_mod.CorpusError, OSError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    written = corpus_mod.save_corpus(corpus, out_dir)
    write_manifest(out_dir, "gen", {"n_patients": config.n_patients},
                   inputs=[config_path] if config_path else [], outputs=written,
                   seed=config.seed)
    click.echo(f"wrote corpus with {len(corpus.patients)} patients to {out_dir}")


@main.command()
@click.option("--in", "in_dir", type=click.Path(), required=True)
def load(in_dir):
    """Load and validate a corpus directory, printing a summary."""
    try:
        corpus = corpus_mod.load_corpus(in_dir)
    except (corpus_mod.CorpusError, OSError) as exc:
        _fail(str(exc))
    n_events = sum(len(p.events) for p in corpus.patients)
    click.echo(f"{len(corpus.patients)} patients, {n_events} events, "
               f"{len(corpus.schema)} tables")


@main.command()
@click.option("--in", "in_dir", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--vocab", "vocab_path", type=click.Path(), default=None,
              help="Existing vocabulary; built from the corpus when omitted.")
@click.option("--min-count", type=int, default=1)
@click.option("--n-e", type=int, default=256)
@click.option("--n-tpe", type=int, default=128)
@click.option("--n-t", type=int, default=8192)
def serialize(in_dir, out_dir, vocab_path, min_count, n_e, n_tpe, n_t):
    """Serialize a corpus into hierarchical and flattened token streams."""
    try:
        corpus = corpus_mod.load_corpus(in_dir)
        config = serializer.SerializerConfig(n_e=n_e, n_tpe=n_tpe, n_t=n_t)
        if vocab_path:
            vocab = Vocabulary.load(vocab_path)
        else:
            vocab = build_vocabulary(_corpus_texts(corpus), min_count=min_count)
        hier = [serializer.build_hierarchical(p, vocab, corpus.definitions, config)
                for p in corpus.patients]
        flat = [serializer.flatten(h, n_t=config.n_t) for h in hier]
    except (corpus_mod.CorpusError, serializer.SerializeError, OSError) as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab_out = out / "vocab.txt"
    vocab.save(vocab_out)
    hier_path, flat_path = out / "streams_hier.jsonl", out / "streams_flat.jsonl"
    serializer.save_streams(hier, hier_path)
    serializer.save_streams(flat, flat_path)
    inputs = sorted(str(p) for p in Path(in_dir).glob("*.tsv"))
    write_manifest(out, "serialize", {"n_e": n_e, "n_tpe": n_tpe, "n_t": n_t},
                   inputs=inputs, outputs=[vocab_out, hier_path, flat_path])
    click.echo(f"serialized {len(hier)} patients to {out_dir}")


def _corpus_texts(corpus):
    for p in corpus.patients:
        for e in p.events:
            yield e.table_name
            for col, cell in e.columns:
                yield col
                yield serializer.textualize_cell(cell, corpus.definitions)


@main.command()
@click.option("--backbone", type=click.Choice([planner.CNN, planner.TRANSFORMER]),
              default=planner.CNN)
@click.option("--input", "input_shape", default="8192x256", help="NxD input shape.")
@click.option("--output", "output_shape", default="64x8", help="NxD output shape.")
@click.option("--layers", "n_l", type=int, default=4,
              help="Transformer layer count (ignored for CNN).")
@click.option("--grid", default=None, help="LMIN:LMAX latent sweep instead of one plan.")
@click.option("--kernel", type=int, default=5)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def plan(backbone, input_shape, output_shape, n_l, grid, kernel, out_dir):
    """Emit a layer plan (or a latent-grid sweep) with its analysis report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, d = _parse_shape(input_shape)
    cost = CostModel(kernel=kernel,
                     attention_variant="linear" if backbone == planner.TRANSFORMER else "full")
    try:
        if grid:
            l_min, l_max = (int(x) for x in grid.split(":"))
            rows = ["l\tt\tc\tbackbone\trate\tparams\tflops"]
            for l, specs in planner.search_grid(l_min, l_max):
                rate = planner.compression_rate_flat(n, d, l)
                for spec in specs:
                    p = (planner.cnn_plan(n, d, spec.t, spec.c) if backbone == planner.CNN
                         else planner.transformer_plan(n, d, spec.t, spec.c, n_l))
                    report = analysis_report(p, cost)
                    rows.append(f"{l}\t{spec.t}\t{spec.c}\t{backbone}\t{rate}"
                                f"\t{report['params']}\t{report['flops']}")
            grid_path = out / "grid.tsv"
            grid_path.write_text("\n".join(rows) + "\n")
            write_manifest(out, "plan", {"grid": grid, "backbone": backbone},
                           inputs=[], outputs=[grid_path])
            click.echo(f"wrote grid sweep to {grid_path}")
            return
        n_out, d_out = _parse_shape(output_shape)
        p = (planner.cnn_plan(n, d, n_out, d_out) if backbone == planner.CNN
             else planner.transformer_plan(n, d, n_out, d_out, n_l))
        defects = validate_plan(p)
        if defects:
            _fail("; ".join(d.message for d in defects))
        plan_path = out / "plan.json"
        planner.save_plan(p, plan_path)
        report = analysis_report(p, cost)
        report_path = out / "analysis.json"
        report_path.write_text(json.dumps(report, indent=2) + "\n")
    except planner.PlanError as exc:
        _fail(str(exc))
    write_manifest(out, "plan", {"backbone": backbone, "input": input_shape,
                                 "output": output_shape, "layers": n_l},
                   inputs=[], outputs=[plan_path, report_path])
    for step in report["trace"]:
        click.echo(f"layer {step['layer'] + 1}: {step['op']} -> "
                   f"({step['shape'][0]},{step['shape'][1]})")
    click.echo(f"params={report['params']} flops={report['flops']}")


@main.command()
@click.option("--plan", "plan_path", type=click.Path(), required=True)
@click.option("--kernel", type=int, default=5)
@click.option("--attention", type=click.Choice(["full", "linear"]), default="full")
def analyze(plan_path, kernel, attention):
    """Analyze an existing plan document: shapes, params, FLOPs."""
    try:
        p = planner.load_plan(plan_path)
        report = analysis_report(p, CostModel(kernel=kernel, attention_variant=attention))
    except (planner.PlanError, OSError, json.JSONDecodeError, KeyError) as exc:
        _fail(str(exc))
    click.echo(json.dumps(report, indent=2))


@main.command()
@click.option("--latent", "latent_path", type=click.Path(), required=True,
              help="JSON file holding a t x c array.")
@click.option("--codebook", "codebook_path", type=click.Path(), required=True)
@click.option("--beta", type=float, default=None,
              help="Commitment weight; when given, the loss terms are reported "
                   "for x = x_tilde = 0.")
@click.option("--out", "out_path", type=click.Path(), required=True)
def quantize(latent_path, codebook_path, beta, out_path):
    """Nearest-code quantization of a latent array."""
    try:
        z = np.asarray(json.loads(Path(latent_path).read_text()), dtype=np.float64)
        codebook = vq.Codebook.load(codebook_path)
        result = vq.quantize(z, codebook)
    except (vq.VQError, OSError, json.JSONDecodeError, ValueError) as exc:
        _fail(str(exc))
    doc = {
        "indices": result.indices.tolist(),
        "z_q": result.z_q.tolist(),
        "commitment_distance": result.commitment_distance,
    }
    if beta is not None:
        doc["commitment_term"] = beta * result.commitment_distance
    Path(out_path).write_text(json.dumps(doc, indent=2) + "\n")
    write_manifest(Path(out_path).parent, "quantize", {"beta": beta},
                   inputs=[latent_path, codebook_path], outputs=[out_path])
    click.echo(f"quantized {z.shape[0]}x{z.shape[1]} latent -> {out_path}")


@main.command("audit")
@click.option("--real", "real_dir", type=click.Path(), required=True)
@click.option("--generated", "generated_path", type=click.Path(), required=True,
              help="Stream JSONL; one sample per line.")
@click.option("--vocab", "vocab_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def audit_cmd(real_dir, generated_path, vocab_path, out_dir):
    """Score generated streams against triples built from a real corpus."""
    try:
        corpus = corpus_mod.load_corpus(real_dir)
        vocab = Vocabulary.load(vocab_path)
        triples = audit_mod.build_triples(corpus, vocab)
        streams = serializer.load_streams(generated_path)
        samples = [serializer.detokenize_events(s, vocab) for s in streams]
        report = audit_mod.score(samples, triples, vocab)
    except (corpus_mod.CorpusError, audit_mod.AuditError,
            serializer.SerializeError, OSError) as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "audit_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    write_manifest(out, "audit", {}, inputs=[generated_path, vocab_path],
                   outputs=[report_path])
    click.echo(json.dumps(report.to_dict(), indent=2))


@main.command("privacy")
@click.option("--train", "train_path", type=click.Path(), required=True)
@click.option("--heldout", "heldout_path", type=click.Path(), required=True)
@click.option("--synthetic", "synthetic_path", type=click.Path(), required=True)
@click.option("--nr", "n_r", type=int, default=10)
@click.option("--thresholds", default="0,0.05,0.1,0.2,0.5,1.0")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def privacy_cmd(train_path, heldout_path, synthetic_path, n_r, thresholds, seed, out_dir):
    """Membership inference attack; writes per-threshold precision/recall."""
    try:
        config = privacy.AttackConfig(
            n_r=n_r, thresholds=tuple(float(t) for t in thresholds.split(",")), seed=seed
        )
        tokens = lambda path: [s.tokens for s in serializer.load_streams(path)]
        report = privacy.membership_attack(
            tokens(train_path), tokens(heldout_path), tokens(synthetic_path), config
        )
    except (privacy.PrivacyError, serializer.SerializeError, OSError, ValueError) as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_path = out / "privacy_curve.tsv"
    lines = ["threshold\tprecision\trecall"]
    for threshold, precision, recall in report.rows():
        lines.append(f"{threshold}\t{'' if precision is None else precision}"
                     f"\t{'' if recall is None else recall}")
    rows_path.write_text("\n".join(lines) + "\n")
    report_path = out / "privacy_report.json"
    report_path.write_text(json.dumps({
        "n_r": report.n_r,
        "seed": report.seed,
        "train_indices": report.train_indices,
        "heldout_indices": report.heldout_indices,
        "results": [
            {"threshold": r.threshold, "precision": r.precision,
             "recall": r.recall, "flagged": r.flagged}
            for r in report.results
        ],
    }, indent=2) + "\n")
    write_manifest(out, "privacy", {"n_r": n_r, "thresholds": thresholds},
                   inputs=[train_path, heldout_path, synthetic_path],
                   outputs=[rows_path, report_path], seed=seed)
    click.echo("\n".join(lines))


@main.command("metrics")
@click.option("--reference", "reference_path", type=click.Path(), default=None)
@click.option("--hypothesis", "hypothesis_path", type=click.Path(), default=None)
@click.option("--include-pads", is_flag=True, default=False)
@click.option("--scores", "scores_path", type=click.Path(), default=None,
              help="TSV of score<TAB>label rows for AUROC.")
def metrics_cmd(reference_path, hypothesis_path, include_pads, scores_path):
    """Token accuracy between stream files and/or AUROC over scored labels."""
    printed = False
    try:
        if reference_path and hypothesis_path:
            refs = serializer.load_streams(reference_path)
            hyps = serializer.load_streams(hypothesis_path)
            if len(refs) != len(hyps):
                _fail("reference and hypothesis stream counts differ")
            values = [metrics_mod.token_accuracy(r, h, include_pads)
                      for r, h in zip(refs, hyps)]
            defined = [v for v in values if v is not None]
            mean = sum(defined) / len(defined) if defined else None
            click.echo(f"token_accuracy\t{mean}")
            printed = True
        if scores_path:
            scores, labels = [], []
            for line in Path(scores_path).read_text().splitlines():
                if not line.strip():
                    continue
                s, lab = line.split("\t")
                scores.append(float(s))
                labels.append(int(lab))
            click.echo(f"auroc\t{metrics_mod.auroc(scores, labels)}")
            printed = True
    except (metrics_mod.MetricError, serializer.SerializeError, OSError, ValueError) as exc:
        _fail(str(exc))
    if not printed:
        _fail("nothing to compute: pass --reference/--hypothesis or --scores")


if __name__ == "__main__":
    main()
