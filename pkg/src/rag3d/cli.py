"""Operator command line.

Exit codes: 0 success, 1 domain error, 2 usage error. Domain errors print a
single machine-parsable line to stderr: ``<ErrorClass>: <message>``.
"""

from __future__ import annotations

import functools
import shutil
import sys
import tempfile
from pathlib import Path

import click

from . import evaluation
from .corpus import code_length_stats, load_corpus, stats_to_csv, validate_corpus
from .embedding import EmbedderConfig, embed_text
from .errors import DomainError
from .executor import ExecutorEnv
from .gateway import Gateway, default_registry, load_registry
from .index import VectorIndex
from .retrieval import DEFAULT_BUDGET, DEFAULT_K, MODE_BASE, MODE_RAG
from .sample_corpus import write_sample_corpus
from .service import ServiceConfig, build_index, build_state, create_app
from .session import Session, SessionRunner, SessionSettings


def domain_errors(fn):
    """Map any DomainError to exit code 1 with a parsable error prefix."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DomainError as exc:
            click.echo(f"{type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Retrieval-augmented 3D script generation toolkit."""


# ── corpus ──────────────────────────────────────────────────────────────────


@main.group()
def corpus():
    """Corpus management: validate, stats, init-sample."""


@corpus.command("validate")
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--strict", is_flag=True, help="Enforce the 50x10 full-shape invariant.")
@domain_errors
def corpus_validate(root, strict):
    loaded = load_corpus(root, strict=strict)
    violations = validate_corpus(loaded, strict=strict)
    if violations:
        for v in violations:
            click.echo(f"{v.code}: {v.subject}: {v.detail}", err=True)
        sys.exit(1)
    click.echo(f"ok: {len(loaded)} entries, {len(loaded.categories)} categories")


@corpus.command("stats")
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@domain_errors
def corpus_stats(root, out):
    loaded = load_corpus(root)
    csv_text = stats_to_csv(code_length_stats(loaded))
    Path(out).write_text(csv_text, encoding="utf-8")
    click.echo(f"wrote {out}")


@corpus.command("init-sample")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@domain_errors
def corpus_init_sample(out):
    write_sample_corpus(out)
    loaded = load_corpus(out)
    click.echo(f"wrote sample corpus with {len(loaded)} entries to {out}")


# ── index ───────────────────────────────────────────────────────────────────


def _embedder_options(fn):
    fn = click.option("--dim", default=768, show_default=True, help="Embedding dimension.")(fn)
    return fn


@main.group()
def index():
    """Vector index: build and search."""


@index.command("build")
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--snapshot", required=True, type=click.Path(dir_okay=False))
@_embedder_options
@domain_errors
def index_build(root, snapshot, dim):
    loaded = load_corpus(root)
    embedder = EmbedderConfig(dim=dim)
    built = build_index(loaded, embedder)
    built.save_snapshot(snapshot)
    click.echo(f"indexed {built.size} entries (dim {built.dim}) into {snapshot}")


@index.command("search")
@click.option("--snapshot", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--query", required=True)
@click.option("-k", "k", default=DEFAULT_K, show_default=True)
@domain_errors
def index_search(snapshot, query, k):
    loaded = VectorIndex.load_snapshot(snapshot)
    embedder = EmbedderConfig(dim=loaded.dim or 768)
    hits = loaded.search_top_k(embed_text(query, embedder), k)
    for hit in hits:
        click.echo(f"{hit.rank}\t{hit.entry_id}\t{hit.score:.3f}")


# ── generate ────────────────────────────────────────────────────────────────


@main.command("generate")
@click.option("--query", required=True)
@click.option("--provider", "provider_id", default="mock", show_default=True)
@click.option("--base", is_flag=True, help="No retrieval context (base condition).")
@click.option("--execute", is_flag=True, help="Execute the generated script in the host.")
@click.option("--render", "render_out", type=click.Path(dir_okay=False), help="Render to this PNG (implies --execute).")
@click.option("--dump-prompt", is_flag=True, help="Print the assembled prompt and exit without calling the model.")
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False), help="Corpus root.")
@click.option("--snapshot", type=click.Path(exists=True, dir_okay=False), help="Index snapshot (else embed on the fly).")
@click.option("--registry", "registry_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "k", default=DEFAULT_K, show_default=True)
@click.option("--budget", default=DEFAULT_BUDGET, show_default=True)
@click.option("--host-binary", help="Modeling host executable (for --execute/--render).")
@click.option("--runner-path", help="Runner script passed to the host.")
@click.option("--timeout", default=120.0, show_default=True)
@domain_errors
def generate(
    query,
    provider_id,
    base,
    execute,
    render_out,
    dump_prompt,
    root,
    snapshot,
    registry_path,
    k,
    budget,
    host_binary,
    runner_path,
    timeout,
):
    """One-shot generation turn for QUERY."""
    loaded = load_corpus(root)
    embedder = EmbedderConfig()
    idx = VectorIndex.load_snapshot(snapshot) if snapshot else build_index(loaded, embedder)
    registry = load_registry(registry_path) if registry_path else default_registry()
    gateway = Gateway(registry)
    gateway.check_credentials(provider_id)  # fail before any work

    if dump_prompt:
        from .retrieval import assemble_prompt, retrieve

        ctx = None if base else retrieve(query, k, embedder, idx, loaded)
        prompt = assemble_prompt(ctx, query, budget=budget)
        click.echo(prompt.rendered)
        return

    executor_env = None
    if execute or render_out:
        if not host_binary or not runner_path:
            raise click.UsageError("--execute/--render require --host-binary and --runner-path")
        executor_env = ExecutorEnv(host_binary=host_binary, runner_path=runner_path, timeout=timeout)

    session = Session(
        session_id="cli",
        provider_id=provider_id,
        mode=MODE_BASE if base else MODE_RAG,
        settings=SessionSettings(k=k, budget=budget, execute=bool(execute or render_out), render=bool(render_out)),
    )
    with tempfile.TemporaryDirectory(prefix="rag3d-cli-") as scratch:
        runner = SessionRunner(
            embedder=embedder,
            index=idx,
            corpus=loaded,
            gateway=gateway,
            executor_env=executor_env,
            sessions_root=Path(scratch) if render_out else None,
        )
        turn = runner.generate(session, query)
        if turn.failure_stage:
            click.echo(f"TurnFailed: {turn.failure_stage}: {turn.failure_detail}", err=True)
            sys.exit(1)
        click.echo(turn.script)
        if turn.execution is not None:
            click.echo(f"# execution: success={turn.execution.success} exit={turn.execution.exit_code}", err=True)
        if turn.render_path:
            target = Path(render_out)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copy(turn.render_path, target)
            manifest = Path(turn.render_path).with_suffix(".json")
            if manifest.is_file():
                shutil.copy(manifest, target.with_suffix(".json"))
            click.echo(f"# render: {target}", err=True)


# ── serve ───────────────────────────────────────────────────────────────────


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@domain_errors
def serve(config_path):
    """Start the HTTP service."""
    import uvicorn

    config = ServiceConfig.from_file(config_path)
    state = build_state(config)
    app = create_app(state)
    uvicorn.run(app, host=config.host, port=config.port)


# ── eval ────────────────────────────────────────────────────────────────────


@main.group("eval")
def eval_group():
    """Evaluation runs."""


@eval_group.command("run")
@click.option("--prompts", "prompts_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--providers", required=True, help="Comma-separated provider ids.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--conditions", default="base,rag", show_default=True)
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False), help="Corpus root.")
@click.option("--snapshot", type=click.Path(exists=True, dir_okay=False))
@click.option("--registry", "registry_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--host-binary", required=True)
@click.option("--runner-path", required=True)
@click.option("--timeout", default=120.0, show_default=True)
@click.option("--scorer-url", help="Remote alignment scorer endpoint.")
@click.option("--scorer-stub", type=float, help="Constant alignment score (offline stub).")
@click.option("--no-render", is_flag=True, help="Skip renders (compilation-only).")
@domain_errors
def eval_run(
    prompts_path,
    providers,
    out_dir,
    conditions,
    root,
    snapshot,
    registry_path,
    host_binary,
    runner_path,
    timeout,
    scorer_url,
    scorer_stub,
    no_render,
):
    """Run the base-vs-rag evaluation protocol and write report files."""
    loaded = load_corpus(root)
    embedder = EmbedderConfig()
    idx = VectorIndex.load_snapshot(snapshot) if snapshot else build_index(loaded, embedder)
    registry = load_registry(registry_path) if registry_path else default_registry()
    gateway = Gateway(registry)
    provider_list = [p.strip() for p in providers.split(",") if p.strip()]
    for provider_id in provider_list:
        gateway.check_credentials(provider_id)

    scorer = None
    if scorer_url:
        scorer = evaluation.ScorerClient(endpoint=scorer_url)
    elif scorer_stub is not None:
        scorer = evaluation.ConstantScorer(score=scorer_stub)

    cfg = evaluation.EvalConfig(
        embedder=embedder,
        index=idx,
        corpus=loaded,
        gateway=gateway,
        executor_env=ExecutorEnv(host_binary=host_binary, runner_path=runner_path, timeout=timeout),
        out_dir=Path(out_dir),
        scorer=scorer,
        render=not no_render,
    )
    prompts = evaluation.load_prompt_set(prompts_path)
    report, items = evaluation.run_eval(prompts, provider_list, conditions.split(","), cfg)
    click.echo(evaluation.report_to_table(report), nl=False)
    click.echo(f"report files in {out_dir}")


if __name__ == "__main__":
    main()
