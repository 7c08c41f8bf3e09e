"""Command-line interface.

Model-client configs are JSON files naming the endpoint, the model, and
the environment variable holding the API key; credentials never live in
the config itself.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .canon import parse_printed_output, parse_shim_payload
from .clients import ClientConfig, HttpModelClient
from .dataset import (Paradigm, export_csvs, load_items, render_schema)
from .equivalence import compare
from .execution import ExecutionLimits, probe_determinism
from .harness import (SETTING_LCF, SETTING_STANDARD, apply_judge_fallback,
                      compute_ex, emit_report, evaluate_item,
                      render_ex_table)


def _client(config_path):
    doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    return HttpModelClient(ClientConfig.from_dict(doc))


def _load_result_file(path: Path):
    """A result file is either a shim wire payload (JSON) or printed
    program output."""
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and "kind" in doc:
        return parse_shim_payload(doc)
    return parse_printed_output(text)


@click.group()
def main():
    """Cross-paradigm execution-accuracy evaluation harness."""


@main.command("export-csv")
@click.argument("db", type=click.Path(exists=True, path_type=Path))
@click.argument("outdir", type=click.Path(path_type=Path))
@click.option("--shuffle-seed", type=int, default=None,
              help="Shuffle row order with this seed before export.")
def export_csv(db, outdir, shuffle_seed):
    """Export every table of DB to '<table>.csv' files in OUTDIR."""
    manifest = export_csvs(db, outdir, shuffle_seed=shuffle_seed)
    click.echo(f"exported {len(manifest.files)} tables to {outdir}")


@main.command("run-eval")
@click.option("--items", "items_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dbs", "dbs_dir", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Directory holding <db_id>.sqlite files.")
@click.option("--paradigm", type=click.Choice(["sql", "code"]),
              required=True)
@click.option("--setting", type=click.Choice(["standard", "lcf"]),
              default="standard")
@click.option("--subject", "subject_cfg", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--oracle", "oracle_cfg", default=None,
              type=click.Path(exists=True, path_type=Path))
@click.option("--judge", "judge_cfg", default=None,
              type=click.Path(exists=True, path_type=Path))
@click.option("--out", "run_dir", required=True,
              type=click.Path(path_type=Path))
@click.option("--timeout", type=float, default=60.0, show_default=True)
def run_eval(items_path, dbs_dir, paradigm, setting, subject_cfg,
             oracle_cfg, judge_cfg, run_dir, timeout):
    """Evaluate every item and write the run report under --out."""
    paradigm = Paradigm(paradigm)
    setting = SETTING_LCF if setting == "lcf" else SETTING_STANDARD
    subject = _client(subject_cfg)
    oracle = _client(oracle_cfg) if oracle_cfg else None
    limits = ExecutionLimits(wall_time=timeout)
    items = load_items(items_path)

    results = []
    for item in items:
        db_ref = Path(dbs_dir) / f"{item.db_id}.sqlite"
        schema = render_schema(db_ref)
        csv_dir = Path(run_dir) / "csvs" / item.db_id
        if paradigm is Paradigm.CODE and not csv_dir.exists():
            export_csvs(db_ref, csv_dir)
        result = evaluate_item(item, schema, paradigm, setting, subject,
                               oracle, db_ref=db_ref, csv_dir=csv_dir,
                               limits=limits, run_dir=run_dir)
        results.append(result)
        click.echo(f"{item.item_id}: "
                   f"{'correct' if result.correct else 'incorrect'}")

    if judge_cfg:
        results = apply_judge_fallback(results, _client(judge_cfg))
    ex = compute_ex(results)
    machine, human = emit_report(results, ex, run_dir)
    click.echo(human.read_text(), nl=False)
    click.echo(f"run document: {machine}")


@main.command("purify")
@click.option("--items", "items_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dbs", "dbs_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--models", "model_cfgs", required=True, multiple=True,
              type=click.Path(exists=True, path_type=Path),
              help="Repeat for each consensus model (at least two).")
@click.option("--out", "run_dir", required=True,
              type=click.Path(path_type=Path))
def purify_cmd(items_path, dbs_dir, model_cfgs, run_dir):
    """Stage-one consensus verification; flagged items land in the queue."""
    from .execution import run_code, run_sql
    from .purify import (AUTO_VERIFIED, ReviewQueue, consensus_verify,
                         generate_candidates, purification_report,
                         render_report)

    models = [_client(cfg) for cfg in model_cfgs]
    queue = ReviewQueue(run_dir)
    outcomes = {}
    for item in load_items(items_path):
        db_ref = Path(dbs_dir) / f"{item.db_id}.sqlite"
        schema = render_schema(db_ref)
        csv_dir = Path(run_dir) / "csvs" / item.db_id
        if not csv_dir.exists():
            export_csvs(db_ref, csv_dir)
        candidates = generate_candidates(
            models, item, schema, Paradigm.CODE,
            executor=lambda program: run_code(csv_dir, program))
        gold_outcome = run_sql(db_ref, item.gold_sql)
        outcome = consensus_verify(item, candidates, gold_outcome)
        outcomes[item.item_id] = outcome
        if outcome.status != AUTO_VERIFIED:
            queue.enqueue(item, outcome)
        click.echo(f"{item.item_id}: {outcome.status}")
    report = purification_report(outcomes, queue.final_records())
    click.echo(render_report(report), nl=False)


@main.command("judge")
@click.argument("file_a", type=click.Path(exists=True, path_type=Path))
@click.argument("file_b", type=click.Path(exists=True, path_type=Path))
@click.option("--order-sensitive", is_flag=True, default=False)
def judge_cmd(file_a, file_b, order_sensitive):
    """Deterministically compare two result files; exit 0 iff equivalent."""
    from .equivalence import EquivalenceOptions
    verdict = compare(_load_result_file(file_a), _load_result_file(file_b),
                      EquivalenceOptions(order_sensitive=order_sensitive))
    if verdict.equivalent:
        click.echo("Equivalent via " + " -> ".join(verdict.rule_trace))
        sys.exit(0)
    click.echo(f"NotEquivalent: {verdict.witness}")
    sys.exit(1)


@main.command("probe")
@click.option("--items", "items_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--dbs", "dbs_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--item", "item_id", required=True)
@click.option("--program", "program_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--paradigm", type=click.Choice(["sql", "code"]),
              required=True)
@click.option("--trials", type=int, default=20, show_default=True)
def probe_cmd(items_path, dbs_dir, item_id, program_path, paradigm, trials):
    """Probe a program for order-determinism under row shuffles."""
    matches = [i for i in load_items(items_path) if i.item_id == item_id]
    if not matches:
        raise click.ClickException(f"no item {item_id!r} in {items_path}")
    item = matches[0]
    report = probe_determinism(
        item, Path(program_path).read_text(encoding="utf-8"),
        Paradigm(paradigm), trials, Path(dbs_dir) / f"{item.db_id}.sqlite")
    click.echo(f"{report.verdict} over {report.trials} trials")
    if report.diverging_pair:
        click.echo(f"diverging trials: {report.diverging_pair}")
    sys.exit(0 if report.verdict == "Stable" else 1)


@main.command("report")
@click.argument("run_dir", type=click.Path(exists=True, path_type=Path))
def report_cmd(run_dir):
    """Print the human-readable accuracy table for a finished run."""
    human = Path(run_dir) / "report.txt"
    if human.exists():
        click.echo(human.read_text(), nl=False)
        return
    machine = Path(run_dir) / "run.json"
    if not machine.exists():
        raise click.ClickException(f"{run_dir} holds no run artifacts")
    doc = json.loads(machine.read_text(encoding="utf-8"))
    click.echo(json.dumps(doc["total"], indent=2))


if __name__ == "__main__":
    main()
