from dblboot.cli import main

raise SystemExit(main())
