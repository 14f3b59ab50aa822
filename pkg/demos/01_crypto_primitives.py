# ## Imports

import random

from hijacklab import crypto

# ## Modular exponentiation and Diffie-Hellman
#
# The small group used throughout the hijack demos: p = 97, g = 5.

params = crypto.DhParams(97, 5)
xc, xs = 36, 58
yc = crypto.dh_public(params, xc)
ys = crypto.dh_public(params, xs)
print("YC =", yc, " YS =", ys)

k_client = crypto.dh_shared(params, ys, xc)
k_server = crypto.dh_shared(params, yc, xs)
print("K  =", k_client, k_server)

# ## Textbook RSA
#
# The classic (61, 53, 17) example: d comes out as 2753.

pair = crypto.rsa_keypair_from_primes(61, 53, 17)
pair.public, pair.private

c = crypto.rsa_encrypt(pair.public, 65)
print("encrypt(65) =", c, " decrypt ->", crypto.rsa_decrypt(pair.private, c))

s = crypto.rsa_sign_recoverable(pair.private, 44)
print("sign(44) =", s, " recover ->", crypto.rsa_recover(pair.public, s))

# No padding: identical plaintexts give identical ciphertexts, and 0 and 1
# are fixed points. Fine for a lab, useless for real traffic.

crypto.rsa_encrypt(pair.public, 0), crypto.rsa_encrypt(pair.public, 1)

# ### A generated key

pub, priv = crypto.rsa_keygen(256, 65537, random.Random(1))
print(pub.n.bit_length(), "bit modulus")

# ## HMAC-SHA1 over the session key
#
# The key is the decimal text of K, so K = 75 becomes the two bytes "75".

key = crypto.encode_session_key(k_client)
print(key, crypto.hmac_sha1(key, b"message").hex())

# ### What the handshake actually encrypts

m = crypto.encode_handshake_payload(97, 5, yc)
print(hex(m), crypto.int_to_bytes(m))
crypto.decode_handshake_payload(m)
