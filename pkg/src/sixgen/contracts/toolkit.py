"""scdev: author and inspect agreement models from the command line.

    scdev list-baselines
    scdev show vnf-b2b
    scdev new vnf-b2b -o my-model.json --set terms.cpu-util.threshold=75
    scdev validate my-model.json
    scdev prose my-model.json --bind provider_name=CarrierOne ...
    scdev hash my-model.json
"""

import json
import sys

import click

from ..errors import MarketplaceError
from . import model as model_mod
from . import prose as prose_mod


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def _parse_assignments(pairs):
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"expected PATH=VALUE, got {pair!r}")
        path, raw = pair.split("=", 1)
        out[path] = _parse_value(raw)
    return out


def _load_file(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@click.group()
def main():
    """Agreement model toolkit."""


@main.command("list-baselines")
def list_baselines():
    for name in model_mod.list_baselines():
        model = model_mod.load_baseline(name)
        click.echo(f"{name:16} {model['resource_type']:16} {model['kind']:4} "
                   f"{len(model['terms'])} terms")


@main.command()
@click.argument("baseline")
def show(baseline):
    model = model_mod.load_baseline(baseline)
    click.echo(json.dumps(model, indent=2, sort_keys=True))


@main.command()
@click.argument("baseline")
@click.option("-o", "--out", type=click.Path(), required=True)
@click.option("--set", "assignments", multiple=True,
              help="Override as PATH=VALUE; VALUE parsed as JSON when possible.")
def new(baseline, out, assignments):
    """Derive a model from a baseline with overrides applied."""
    overrides = _parse_assignments(assignments)
    model = model_mod.apply_overrides(model_mod.load_baseline(baseline),
                                      overrides)
    model_mod.validate_model(model)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(model, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {out} (hash {model_mod.model_hash(model)[:16]})")


@main.command()
@click.argument("path", type=click.Path(exists=True))
def validate(path):
    model = _load_file(path)
    model_mod.validate_model(model)
    click.echo(f"OK model_id={model['model_id']} "
               f"hash={model_mod.model_hash(model)[:16]}")


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--bind", "bindings", multiple=True,
              help="Placeholder binding as NAME=VALUE.")
@click.option("-o", "--out", type=click.Path(), default=None)
def prose(path, bindings, out):
    """Render the legal text with the given placeholder bindings."""
    model = _load_file(path)
    model_mod.validate_model(model)
    text = prose_mod.render_prose(model, _parse_assignments(bindings))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        click.echo(f"wrote {out} (hash {prose_mod.prose_hash(text)[:16]})")
    else:
        click.echo(text)


@main.command("hash")
@click.argument("path", type=click.Path(exists=True))
def hash_cmd(path):
    model = _load_file(path)
    click.echo(model_mod.model_hash(model))


def run():
    try:
        main(standalone_mode=False)
    except MarketplaceError as exc:
        click.echo(f"error [{exc.code}]: {exc.message}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)


if __name__ == "__main__":
    run()
