# The batch pipeline end to end through the command line entry point
#
# simulate writes estimator files per video, aggregate fuses them, pseudo-gt
# builds the training targets and evaluate scores everything against GT.

import json
import tempfile
from pathlib import Path

from posefuse.cli import main

root = Path(tempfile.mkdtemp())
main(["simulate", "--out", str(root / "sim"), "--videos", "3", "--frames", "80", "--seed", "5"])
print(sorted(p.name for p in (root / "sim" / "videos").iterdir()))

# In[2]:

main(["aggregate", "--input", str(root / "sim" / "videos"), "--out", str(root / "refined"),
      "--estimators", "top_down,bottom_up,jittery"])
manifest = json.loads((root / "refined" / "manifest.json").read_text())
print("config hash:", manifest["config_hash"][:16])
for video, stats in manifest["videos"].items():
    main_track = stats["persons"][0]
    print(video, "retained", main_track["retained"], "discarded", main_track["discarded"])

# In[3]:

main(["pseudo-gt", "--input", str(root / "refined"), "--out", str(root / "pgt"), "--anchors", "5"])
print((root / "pgt" / "annotations.jsonl").read_text().splitlines()[1])

# In[4]:

preds = [f"{name}={root / 'sim' / 'experts' / name}" for name in ("top_down", "bottom_up", "jittery")]
preds.append(f"sst_a={root / 'refined'}")
args = ["evaluate", "--gt", str(root / "sim" / "gt"), "--out", str(root / "eval"),
        "--scored", str(root / "refined" / "scored"), "--alpha", "2.0", "--extra-alpha", "0.5"]
for p in preds:
    args += ["--pred", p]
main(args)
print((root / "eval" / "report.csv").read_text())
