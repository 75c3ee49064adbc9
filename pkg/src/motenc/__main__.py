from motenc.cli import main

raise SystemExit(main())
