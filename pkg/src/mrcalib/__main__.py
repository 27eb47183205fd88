from mrcalib.cli import main

raise SystemExit(main())
