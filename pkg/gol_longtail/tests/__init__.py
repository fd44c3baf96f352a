import pathlib

TEST_DIR = pathlib.Path(__file__).parent.absolute()
