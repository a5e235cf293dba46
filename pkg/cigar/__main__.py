import sys

from cigar.cli import main


sys.exit(main())
