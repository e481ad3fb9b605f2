from medchain.lib.crypto.keys import SecretKey, PublicKey, SeededEntropy, keygen
from medchain.lib.crypto.pre import Capsule, Ciphertext, DelegationKey, ReEncryption, encrypt, decrypt_original, \
    generate_delegation_key, reencrypt, decrypt_reencrypted, verify
