"""Allow ``python -m mscn``."""

from .cli import main

main()
