import sys

from fairscaling.harness.cli import main

sys.exit(main())
