import sys

from hardsum.bench import main

sys.exit(main())
