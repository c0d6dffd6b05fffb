import sys

from dotenv import load_dotenv

from api.commands import run


def main() -> None:
    """Console entry point for the insulation-lab command line."""
    load_dotenv(override=True)
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
