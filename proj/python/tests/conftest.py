import os
import sys

# When run from ctest, import the package staged in the build tree rather
# than any installed or editable copy.
_stage = os.environ.get("VULSTYLE_STAGE")
if _stage:
    sys.meta_path[:] = [f for f in sys.meta_path if not type(f).__module__.startswith("_editable_")]
    sys.path.insert(0, _stage)
    sys.modules.pop("vulstyle", None)
