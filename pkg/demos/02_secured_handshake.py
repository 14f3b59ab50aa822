# ## Imports

from hijacklab.experiments import run_handshake
from hijacklab.netsim import transcript_lines

# ## Three segments, fixed parameters
#
# The server key stands in for a certificate distributed out of band.

result = run_handshake(p=97, g=5, xc=36, xs=58, seed=0)
for line in result.lines():
    print(line)

# Both sides land on the same key without ever sending it.

assert result.client_key == result.server_key == 75

# ## On the wire

for line in transcript_lines(result.net.transcript):
    print(line[:160])

# Acknowledgment numbers are echoed as-is in this mode: the SYN|ACK
# carries ack = J and the final ACK carries ack = I.

sent = [ev.segment for ev in result.net.transcript if ev.kind == "sent"]
[(s.seq, s.ack) for s in sent]

# ## Random parameters
#
# A fresh 32-bit prime and generator per seed.

for seed in range(3):
    r = run_handshake(bits=32, seed=seed)
    print(f"seed {seed}: p={r.p} g={r.g} K={r.client_key}/{r.server_key}")
