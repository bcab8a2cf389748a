import sys

from songemo.harness.cli import main

sys.exit(main())
