def fixnormlab():
    import sys
    from fixnormlab.cli import main
    sys.exit(main())
