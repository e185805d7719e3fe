"""CLI: render <figure-kind> <experiment-dir> <out.png>."""

from __future__ import annotations

import sys

import click

from .figures import FIGURE_KINDS, SchemaError, render


@click.command()
@click.argument("figure_kind", type=click.Choice(FIGURE_KINDS))
@click.argument("experiment_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out_image", type=click.Path())
def main(figure_kind, experiment_dir, out_image):
    """Render one figure from a propost experiment artifact directory."""
    try:
        path = render(figure_kind, experiment_dir, out_image)
    except (SchemaError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
