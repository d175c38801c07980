#!/usr/bin/env python3
"""
Setup validation script for opnorm-lab.

This script validates that the numerical environment is properly configured.
"""

import importlib
import os
import sys
from typing import List, Tuple


def check_python_version() -> Tuple[bool, str]:
    """
    Check if Python version is compatible.

    Returns:
        Tuple[bool, str]: (success, message)
    """
    version = sys.version_info
    if version.major == 3 and version.minor >= 10:
        return True, f"✅ Python {version.major}.{version.minor}.{version.micro}"
    return False, f"❌ Python {version.major}.{version.minor}.{version.micro} (requires 3.10+)"


def check_required_packages() -> Tuple[bool, List[str]]:
    """
    Check if required packages are installed.

    Returns:
        Tuple[bool, List[str]]: (all_success, messages)
    """
    required_packages = {
        "numpy": "numpy",
        "scipy": "scipy",
        "pandas": "pandas",
        "pydantic": "pydantic",
        "python-dotenv": "dotenv",
    }

    messages = []
    all_success = True

    for package, module in required_packages.items():
        try:
            imported = importlib.import_module(module)
            version = getattr(imported, "__version__", "")
            messages.append(f"✅ {package} {version}".rstrip())
        except ImportError:
            messages.append(f"❌ {package} (missing)")
            all_success = False

    try:
        importlib.import_module("pytest")
        messages.append("✅ pytest (dev)")
    except ImportError:
        messages.append("⚠️ pytest missing (only needed to run the test suite)")

    return all_success, messages


def check_environment_variables() -> Tuple[bool, List[str]]:
    """
    Check environment variables configuration.

    Returns:
        Tuple[bool, List[str]]: (all_success, messages)
    """
    messages = []

    if os.path.exists(".env"):
        messages.append("✅ .env file exists")
    elif os.path.exists("env.example"):
        messages.append("⚠️ .env file missing (defaults apply; see env.example)")

    try:
        from opnorm_lab.utils.config import config
    except ImportError as exc:
        messages.append(f"❌ opnorm_lab not importable: {exc}")
        return False, messages

    if not config.validate_config():
        messages.append("❌ Invalid OPNORM_LAB_* or LOG_LEVEL values (see log above)")
        return False, messages

    messages.append(f"✅ OPNORM_LAB_THREADS={config.THREADS}")
    messages.append(f"✅ OPNORM_LAB_DEFAULT_REPS={config.DEFAULT_REPS}")
    messages.append(f"✅ OPNORM_LAB_K_MAX={config.K_MAX}")
    messages.append(f"✅ LOG_LEVEL={config.LOG_LEVEL}")
    return True, messages


def check_file_structure() -> Tuple[bool, List[str]]:
    """
    Check if required files and directories exist.

    Returns:
        Tuple[bool, List[str]]: (all_success, messages)
    """
    required_paths = [
        "opnorm_lab/main.py",
        "opnorm_lab/models/experiment_models.py",
        "opnorm_lab/services/matcore.py",
        "opnorm_lab/services/chaining.py",
        "opnorm_lab/services/factorrank.py",
        "opnorm_lab/services/momest.py",
        "opnorm_lab/services/harness.py",
        "opnorm_lab/utils/config.py",
        "tests/conftest.py",
        "pyproject.toml",
        "requirements.txt",
    ]

    messages = []
    all_success = True

    for path in required_paths:
        if os.path.exists(path):
            messages.append(f"✅ {path}")
        else:
            messages.append(f"❌ {path} (missing)")
            all_success = False

    return all_success, messages


def main():
    """Main validation function."""
    print("🔍 opnorm-lab - Setup Validation")
    print("=" * 50)

    all_checks_passed = True

    python_ok, python_msg = check_python_version()
    print("\n📋 Python Version:")
    print(f"   {python_msg}")
    all_checks_passed &= python_ok

    packages_ok, package_msgs = check_required_packages()
    print("\n📦 Required Packages:")
    for msg in package_msgs:
        print(f"   {msg}")
    all_checks_passed &= packages_ok

    env_ok, env_msgs = check_environment_variables()
    print("\n🔧 Environment Configuration:")
    for msg in env_msgs:
        print(f"   {msg}")
    all_checks_passed &= env_ok

    files_ok, file_msgs = check_file_structure()
    print("\n📁 File Structure:")
    for msg in file_msgs:
        print(f"   {msg}")
    all_checks_passed &= files_ok

    print("\n" + "=" * 50)
    if all_checks_passed:
        print("🎉 All checks passed! Your setup is ready.")
        print("\n🚀 Next steps:")
        print("   1. Run the tests: pytest -m 'not slow'")
        print("   2. Try: opnorm-lab table1 --reps 50 --sizes 25,50")
    else:
        print("❌ Some checks failed. Please fix the issues above.")
        print("\n📖 See README.md for detailed setup instructions.")

    print("=" * 50)

    return 0 if all_checks_passed else 1


if __name__ == "__main__":
    sys.exit(main())
