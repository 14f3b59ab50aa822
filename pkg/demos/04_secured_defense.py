# ## Imports

from hijacklab import Mode, run_hijack

# ## Same attack, hardened handshake
#
# With a checkpoint every W data segments the forged command can reach the
# application only provisionally, and the next checkpoint tears the session
# down.

report = run_hijack(Mode.SECURED, b"sudo passwd root", seed=7, window=10, honest_packets=3)

for line in report.server_log:
    print(line)

print("detected at checkpoint", report.detected_at_checkpoint)
print("forged payloads seen before the alarm", report.forged_accepted_before_detection)
print("forgery stood", report.server_accepted_forgery)

# The attacker never knew K, so its best guess at the checkpoint is a
# replay of the last one it sniffed. The window ordinal in the transcript
# makes that fail too.

[ev.note for ev in report.events if ev.kind == "injected"][-3:]

# ## Exposure by injection point
#
# Exposure shrinks as the injection lands later in the window; W = 1 leaves
# nothing.

for w in (1, 5, 10):
    row = [run_hijack(Mode.SECURED, seed=h, window=w, honest_packets=h).forged_accepted_before_detection
           for h in range(w)]
    print(f"W={w:<3}", row)

# ## Control: nobody attacks

control = run_hijack(Mode.SECURED, seed=7, window=10, honest_packets=25, attack=False)
control.checkpoints_ok, control.checkpoints_failed, control.detected_at_checkpoint
