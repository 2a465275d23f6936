import asyncio
import sys

from .cli import main as cli_main
from .main import main

# No arguments: execute the Actor entry point (platform runs). Otherwise the CLI.
if len(sys.argv) > 1:
    sys.exit(cli_main())
asyncio.run(main())
