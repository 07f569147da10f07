"""Command line entry point: python cli.py <command> --help"""
import functools
import os
from typing import List

import click
import pandas as pd
from pydantic import ValidationError

import config
from data import (LabelSet, NormalizationMode, SyntheticSpec, binarize, fit_normalizer, generate_synthetic,
                  load_normalizer, normalize_features, parse_letor, save_normalizer, split, write_letor)
from errors import LtrNoiseError
from experiments import (SUMMARY_COLUMNS, LetorSource, OrderPreservationSpec, SweepSpec, file_stem, points_frame,
                         run_erm_sweep, run_order_preservation_experiment)
from noise import NoiseSpec, corrupt_dataset
from risk_lab import ScorerFamily, deviation_bound, expected_excess_bound, parse_objective
from seeding import derive_seed
from training import (LEARNING_RATE_GRID, WEIGHT_DECAY_GRID, AdamState, TrainConfig, evaluate_model, grid_search,
                      load_model, save_model, train)

HISTORY_COLUMNS = ["epoch", "train_loss", "holdout_loss"]


def domain_errors(command):
    """Report toolkit and validation errors as click errors (exit code 1)"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (LtrNoiseError, ValidationError) as e:
            raise click.ClickException(str(e))
    return wrapper


def _out_path(ctx: click.Context, name: str) -> str:
    out_dir = ctx.obj["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


@click.group()
@click.option("--seed", type=click.IntRange(min=0), default=config.LTR_SEED, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=config.LTR_OUTPUT_DIR, show_default=True)
@click.option("--threads", type=click.IntRange(min=1), default=config.LTR_THREADS, show_default=True)
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=config.LOG_LEVEL, show_default=True)
@click.pass_context
def cli(ctx, seed, out_dir, threads, log_level):
    """Label noise and order preservation in learning to rank."""
    config.configure_logging(log_level)
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, out_dir=out_dir, threads=threads)


@cli.command("gen-synthetic")
@click.option("--queries", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--docs-per-query", "--docs", "docs", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--dim", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--total-samples", type=click.IntRange(min=1), default=None,
              help="Overrides --queries with total_samples // docs-per-query.")
@click.option("--label-mode", type=click.Choice(["bernoulli", "threshold"]), default="bernoulli", show_default=True)
@click.option("--theta-mode", type=click.Choice(["per_query", "shared"]), default="per_query", show_default=True)
@click.option("--prevalence", type=(float, float), default=None, help="Per-query prevalence range, e.g. 0.1 0.9")
@click.option("--out", "out_name", default="synthetic.txt", show_default=True, help="File name under --out-dir.")
@click.pass_context
@domain_errors
def gen_synthetic(ctx, queries, docs, dim, total_samples, label_mode, theta_mode, prevalence, out_name):
    """Generate a synthetic dataset and write it in LETOR format (the oracle is not written)."""
    spec = SyntheticSpec(num_queries=queries, docs_per_query=docs, feature_dim=dim, total_samples=total_samples,
                         seed=ctx.obj["seed"], label_mode=label_mode, theta_mode=theta_mode,
                         prevalence_range=prevalence)
    ds = generate_synthetic(spec)
    path = _out_path(ctx, out_name)
    write_letor(ds, path)
    click.echo(f"wrote {len(ds)} queries, {ds.num_documents} documents to {path}")


@cli.command("inject-noise")
@click.option("--input", "--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--gamma", type=click.FloatRange(0.0, 1.0), required=True)
@click.option("--relevance-threshold", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--output", "--out", "out_name", default="noisy.txt", show_default=True,
              help="File name under --out-dir.")
@click.pass_context
@domain_errors
def inject_noise(ctx, in_path, gamma, relevance_threshold, out_name):
    """Binarize a LETOR file and flip each label with probability 1 - gamma."""
    ds = binarize(parse_letor(in_path), relevance_threshold)
    noisy = corrupt_dataset(ds, NoiseSpec(gamma=gamma, seed=ctx.obj["seed"]))
    path = _out_path(ctx, out_name)
    write_letor(noisy, path, labels=LabelSet.noisy)
    flips = int((noisy.labels(LabelSet.noisy) != noisy.labels(LabelSet.clean)).sum())
    click.echo(f"flipped {flips} of {noisy.num_documents} labels; wrote {path}")


def normalizer_path(model_path: str) -> str:
    return f"{model_path}.normalizer.json"


@cli.command("train")
@click.option("--data", "--train", "train_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="LETOR training file.")
@click.option("--holdout", "holdout_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Early-stopping data; split 20% of --data when omitted.")
@click.option("--loss", "loss_name", default="symmetrized_ranknet", show_default=True,
              help="Loss name; ranknet and symmetrized_ranknet are pairwise.")
@click.option("--mode", type=click.Choice(["pointwise", "pairwise"]), default=None)
@click.option("--gamma", type=click.FloatRange(0.0, 1.0), default=None,
              help="Flip training and holdout labels with probability 1 - gamma; labels are used as given otherwise.")
@click.option("--lr", type=float, default=None, help="Fix the learning rate instead of grid searching.")
@click.option("--wd", type=float, default=None, help="Fix the weight decay instead of grid searching.")
@click.option("--lr-grid", type=float, multiple=True, help="Learning rates to search; repeat the flag.")
@click.option("--wd-grid", type=float, multiple=True, help="Weight decays to search; repeat the flag.")
@click.option("--batch-queries", type=click.IntRange(min=1), default=None)
@click.option("--max-epochs", type=click.IntRange(min=0), default=2000, show_default=True)
@click.option("--relevance-threshold", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--normalize", type=click.Choice([m.value for m in NormalizationMode]), default=None,
              help="Fit on the training split; the statistics are saved next to the model.")
@click.option("--out-model", "--model-out", "model_out", default="model.txt", show_default=True,
              help="File name under --out-dir.")
@click.option("--out-history", "history_out", default=None,
              help="Write the epoch,train_loss,holdout_loss CSV of the selected run (file name under --out-dir).")
@click.pass_context
@domain_errors
def train_command(ctx, train_path, holdout_path, loss_name, mode, gamma, lr, wd, lr_grid, wd_grid, batch_queries,
                  max_epochs, relevance_threshold, normalize, model_out, history_out):
    """Fit a linear scorer with Adam and early stopping."""
    objective = parse_objective(loss_name, mode)
    if objective.is_metric:
        raise click.BadParameter(f"'{loss_name}' is a metric, not a loss", param_hint="--loss")
    if lr is not None and lr_grid:
        raise click.UsageError("--lr and --lr-grid are mutually exclusive")
    if wd is not None and wd_grid:
        raise click.UsageError("--wd and --wd-grid are mutually exclusive")
    seed = ctx.obj["seed"]

    train_ds = binarize(parse_letor(train_path), relevance_threshold)
    holdout_ds = binarize(parse_letor(holdout_path), relevance_threshold) if holdout_path else None
    if gamma is not None:
        train_ds = corrupt_dataset(train_ds, NoiseSpec(gamma=gamma, seed=seed))
        if holdout_ds is not None:
            holdout_ds = corrupt_dataset(holdout_ds, NoiseSpec(gamma=gamma, seed=derive_seed(seed, "holdout")))
    if holdout_ds is None:
        train_ds, holdout_ds = split(train_ds, 0.8, seed)
    normalizer = None
    if normalize:
        normalizer = fit_normalizer(train_ds, normalize)
        train_ds, holdout_ds = normalizer.transform(train_ds), normalizer.transform(holdout_ds)

    train_config = TrainConfig(loss=objective.loss.kind, mode=objective.mode, max_epochs=max_epochs,
                               batch_queries=batch_queries, labels=LabelSet.noisy, seed=seed)
    lr_grid = list(lr_grid) or ([lr] if lr is not None else LEARNING_RATE_GRID)
    wd_grid = list(wd_grid) or ([wd] if wd is not None else WEIGHT_DECAY_GRID)
    if len(lr_grid) == 1 and len(wd_grid) == 1:
        result = train(train_ds, holdout_ds, train_config,
                       AdamState(learning_rate=lr_grid[0], weight_decay=wd_grid[0]))
        model, history = result.model, result.history
        summary = f"lr={lr_grid[0]:g} wd={wd_grid[0]:g} best epoch {result.best_epoch}"
    else:
        best = grid_search(train_ds, holdout_ds, train_config, lr_grid, wd_grid, n_jobs=ctx.obj["threads"])
        model, history = best.model, best.history
        summary = f"lr={best.learning_rate:g} wd={best.weight_decay:g} holdout {best.holdout_loss:.6f}"

    path = _out_path(ctx, model_out)
    save_model(model, path)
    written = [path]
    if normalizer is not None:
        save_normalizer(normalizer, normalizer_path(path))
        written.append(normalizer_path(path))
    if history_out:
        history_path = _out_path(ctx, history_out)
        pd.DataFrame([vars(r) for r in history], columns=HISTORY_COLUMNS).to_csv(history_path, index=False)
        written.append(history_path)
    click.echo(f"{objective.name}: {summary}; wrote {', '.join(written)}")


@cli.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--metric", "metric_names", multiple=True, default=["ndcg@10", "map", "auc"], show_default=True)
@click.option("--relevance-threshold", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--normalize", type=click.Choice([m.value for m in NormalizationMode]), default=None,
              help="Defaults to the mode saved with the model.")
@domain_errors
def evaluate(model_path, data_path, metric_names, relevance_threshold, normalize):
    """Print metric,value CSV for a saved model on a LETOR file (metrics are losses: lower is better)."""
    ds = binarize(parse_letor(data_path), relevance_threshold)
    saved = normalizer_path(model_path)
    normalizer = load_normalizer(saved) if os.path.exists(saved) else None
    if normalize is None and normalizer is not None:
        normalize = normalizer.mode
    if normalize:
        if normalizer is None and NormalizationMode(normalize) is NormalizationMode.global_standardize:
            raise click.ClickException(f"No training statistics at {saved}; global_standardize cannot be reapplied")
        ds = normalize_features(ds, normalize, normalizer)
    model = load_model(model_path)
    results = evaluate_model(model, ds, metric_names)
    frame = pd.DataFrame([{"metric": name, "value": v.value, "queries_used": v.queries_used,
                           "queries_skipped": v.queries_skipped} for name, v in results.items()])
    click.echo(frame.to_csv(index=False), nl=False)


def _write_points(result, path: str) -> List[str]:
    """Point CSV per objective at `path` (suffixed by objective when several) plus `<stem>_summary.csv`"""
    stem, ext = os.path.splitext(path)
    ext = ext or ".csv"
    written = []
    for report in result.reports:
        target = path if len(result.reports) == 1 else f"{stem}_{file_stem(report.objective)}{ext}"
        points_frame(report).to_csv(target, index=False)
        written.append(target)
    summary = f"{stem}_summary{ext}"
    pd.DataFrame(result.summary_rows(), columns=SUMMARY_COLUMNS).to_csv(summary, index=False)
    return written + [summary]


@cli.command("simulate-order-preservation")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML file with OrderPreservationSpec fields; flags below override it.")
@click.option("--loss", "objectives", multiple=True, help="Loss or metric name; repeat for several.")
@click.option("--gamma", type=click.FloatRange(0.0, 1.0), default=None)
@click.option("--scorers", type=click.IntRange(min=2), default=None)
@click.option("--draws", type=click.IntRange(min=1), default=None)
@click.option("--queries", type=click.IntRange(min=1), default=None, help="Queries per draw.")
@click.option("--pool", type=click.IntRange(min=1), default=None, help="Synthetic queries to draw from.")
@click.option("--out", "out_name", default=None,
              help="Also write the point CSV here (file name under --out-dir) with a <stem>_summary companion.")
@click.option("--plot-data", is_flag=True, help="Also write long-format plot data.")
@click.pass_context
@domain_errors
def simulate_order_preservation(ctx, config_path, objectives, gamma, scorers, draws, queries, pool, out_name,
                                plot_data):
    """Regress noisy on clean risk across a family of scorers for each objective."""
    fields = OrderPreservationSpec.from_yaml(config_path).model_dump() if config_path else {}
    fields["seed"] = ctx.obj["seed"]
    overrides = {"objectives": list(objectives) or None, "gamma": gamma, "draws": draws,
                 "queries_per_draw": queries, "pool_queries": pool}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if scorers is not None:
        fields["family"] = {**fields.get("family", {}), "size": scorers}
    fields["family"] = ScorerFamily.model_validate({**fields.get("family", {}), "seed": ctx.obj["seed"]})
    spec = OrderPreservationSpec.model_validate(fields)

    result = run_order_preservation_experiment(spec, ctx.obj["out_dir"], n_jobs=ctx.obj["threads"],
                                               plot_data=plot_data)
    if out_name:
        result.files.extend(_write_points(result, _out_path(ctx, out_name)))
    for report in result.reports:
        flag = " (low confidence)" if report.low_confidence else ""
        click.echo(f"{report.objective}: slope {report.slope:.4f} (predicted {report.predicted_slope:.4f}) "
                   f"intercept {report.intercept:.4f} r2 {report.r_squared:.4f} "
                   f"rho {report.spearman_rho:.4f}{flag}")
    click.echo(f"wrote {len(result.files)} files to {ctx.obj['out_dir']}")


@cli.command("erm-sweep")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML file with SweepSpec fields; flags below override it.")
@click.option("--gamma", "gammas", type=float, multiple=True)
@click.option("--loss", "loss_names", multiple=True)
@click.option("--metric", "metric_names", multiple=True)
@click.option("--seeds", type=click.IntRange(min=1), default=None, help="Run seeds --seed .. --seed+N-1.")
@click.option("--letor", "letor_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Use a LETOR file instead of synthetic data.")
@click.option("--max-epochs", type=click.IntRange(min=1), default=None)
@click.option("--plot-data", is_flag=True, help="Also write median-per-seed plot data.")
@click.pass_context
@domain_errors
def erm_sweep(ctx, config_path, gammas, loss_names, metric_names, seeds, letor_path, max_epochs, plot_data):
    """Train on noisy labels for every (gamma, loss, seed) and score on clean test data."""
    fields = SweepSpec.from_yaml(config_path).model_dump() if config_path else {}
    overrides = {"gammas": list(gammas) or None, "losses": list(loss_names) or None,
                 "metrics": list(metric_names) or None, "max_epochs": max_epochs}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if seeds is not None:
        fields["seeds"] = list(range(ctx.obj["seed"], ctx.obj["seed"] + seeds))
    if letor_path:
        fields["source"] = LetorSource(path=letor_path).model_dump()
    spec = SweepSpec.model_validate(fields)

    result = run_erm_sweep(spec, ctx.obj["out_dir"], n_jobs=ctx.obj["threads"], plot_data=plot_data)
    failed = sum(row.failed for row in result.rows)
    click.echo(f"{len(result.rows)} rows ({failed} failed); wrote {', '.join(result.files)}")


@cli.command()
@click.option("--n", type=click.IntRange(min=1), required=True, help="Training sample size.")
@click.option("--epsilon", type=float, default=0.1, show_default=True)
@click.option("--gamma", type=float, required=True)
@click.option("--shatter-log", type=float, required=True, help="log S(F, n)")
@click.option("--slack", type=float, default=0.0, show_default=True, help="Optimization slack of an almost-minimizer.")
@click.option("--failure-probability", type=float, default=0.0, show_default=True)
@domain_errors
def bounds(n, epsilon, gamma, shatter_log, slack, failure_probability):
    """Evaluate the deviation and expected-excess bounds for ERM on noisy labels."""
    deviation = deviation_bound(n, epsilon, gamma, shatter_log, slack, failure_probability)
    excess = expected_excess_bound(n, gamma, shatter_log)
    click.echo(f"deviation_bound={deviation:.6g}")
    click.echo(f"expected_excess_bound={excess:.6g}")


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP API."""
    import uvicorn

    uvicorn.run("main:app", host=host, port=port)


if __name__ == "__main__":
    cli(obj={})
