# ## Imports

import tempfile
from pathlib import Path

from hijacklab import Mode, run_hijack
from hijacklab.attacker import Attacker, extract_session_intel, forge_injection
from hijacklab.netsim import SimNet

# ## The attack against an ordinary handshake
#
# Client 192.168.0.104:59999 talks to a shell server at 192.168.0.105:49999.
# The attacker sits on the path, reads the next sequence number off the
# wire, injects a command and then resets the client.

out = Path(tempfile.mkdtemp())
report = run_hijack(Mode.PLAIN, b"sudo passwd root", seed=7, transcript=out / "plain.jsonl")

for line in report.server_log:
    print(line)

report.to_dict()

# ## What the attacker saw
#
# Re-run with our own network object so the tap can be inspected.

net = SimNet()
run_hijack(Mode.PLAIN, seed=7, attack=False, net=net)
spy = next(t for t in net.taps if isinstance(t, Attacker))
intel = extract_session_intel(spy.segments())
intel

forged = forge_injection(intel, b"sudo passwd root")
print(forged.describe(), "ttl", forged.ttl)

# ## Injected frames in the transcript

for ev in report.events:
    if ev.kind == "injected":
        print(ev.t, ev.note, ev.segment.describe())
