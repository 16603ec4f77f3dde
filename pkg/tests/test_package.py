"""Package surface: lazy exports, version, attribute resolution."""

import subprocess
import sys

import pytest

import scmest


def test_import_defers_numpy():
    # the CLI relies on this to set BLAS thread caps before numpy loads
    code = (
        "import sys; import scmest; "
        "sys.exit(1 if 'numpy' in sys.modules else 0)"
    )
    proc = subprocess.run([sys.executable, "-c", code])
    assert proc.returncode == 0


def test_attributes_resolve_to_their_modules():
    from scmest.scfun import omega
    from scmest.estimate import fit_erm

    assert scmest.omega is omega
    assert scmest.fit_erm is fit_erm


def test_dir_lists_exports():
    names = dir(scmest)
    for expected in ("omega", "fit_erm", "ConfidenceSet", "bootstrap_quantile", "run_test"):
        assert expected in names


def test_version():
    assert scmest.__version__ == "0.1.0"


def test_unknown_attribute():
    with pytest.raises(AttributeError):
        scmest.nonexistent_name
