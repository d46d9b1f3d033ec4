from spkaug.cli import main

main()
