"""Allow ``python -m bcm_infer``."""

from .cli import cli

if __name__ == "__main__":
    cli()
