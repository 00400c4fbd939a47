import spcnav


def test_version():
    vers = spcnav.__version__
    assert len(vers.split(".")) == 3


def test_print_version(capsys):
    spcnav.print_version()
    read = capsys.readouterr().out
    assert len(read.split(".")) == 3
