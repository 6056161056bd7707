"""ReLU versus sine activations on a high-frequency target.

Both networks have the same shape and step budget; the residual left above
half-Nyquist shows which one actually learned the fine detail.

    python3 demos/03_spectral_bias.py
"""

from field_codec.applications import high_frequency_energy, power_spectrum, spectral_bias_trial

for seed in range(5):
    t = spectral_bias_trial(seed, n=32, steps=300)
    winner = "SIREN" if t.siren_high < t.relu_high else "ReLU"
    print(f"seed {seed}: residual HF energy  ReLU {t.relu_high:.3e}  SIREN {t.siren_high:.3e}  -> {winner}")

# Radial spectrum of the last trial: target energy sits in the upper bins.
bins, target_power = power_spectrum(t.target)
_, relu_res = power_spectrum(t.target - t.relu_fit)
_, siren_res = power_spectrum(t.target - t.siren_fit)
print("bin   target      ReLU resid  SIREN resid")
for k in range(0, len(bins), 3):
    print(f"{int(bins[k]):3d}  {target_power[k]:10.3e}  {relu_res[k]:10.3e}  {siren_res[k]:10.3e}")
print(f"target HF energy {high_frequency_energy(t.target):.3e}")
