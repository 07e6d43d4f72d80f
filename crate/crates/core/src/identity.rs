//! Organizations, certificates and user identities.
//!
//! Every organization runs its own root certificate authority. A
//! certificate binds a `local_id` (unique within the organization) to the
//! organization's MSP id, a role and a public key. The globally unique
//! [`UserId`] is `local_id@org_msp_id`; `@` is rejected in both components,
//! so the mapping is injective.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::RwLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::crypto::{sign, verify_sig, Digest, PublicKey, SecretKey, Signature};

pub const USER_ID_SEPARATOR: char = '@';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("organization {0:?} already exists")]
    DuplicateOrg(String),
    #[error("invalid name {0:?}: must be nonempty and must not contain '@'")]
    InvalidName(String),
    #[error("unknown organization {0:?}")]
    UnknownOrg(String),
    #[error("local id {0:?} already issued in this organization")]
    DuplicateLocalId(String),
    #[error("certificate does not verify")]
    InvalidCertificate,
    #[error("malformed user id {0:?}")]
    MalformedUserId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Peer,
    Orderer,
    Client,
}

impl Role {
    fn tag(self) -> u8 {
        match self {
            Role::Peer => 0,
            Role::Orderer => 1,
            Role::Client => 2,
        }
    }
}

impl Canonical for Role {
    fn encode(&self, w: &mut Writer) {
        w.u8(self.tag());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.u8()? {
            0 => Ok(Role::Peer),
            1 => Ok(Role::Orderer),
            2 => Ok(Role::Client),
            tag => Err(CodecError::InvalidTag { what: "role", tag }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub local_id: String,
    pub org_msp_id: String,
    pub role: Role,
    pub public_key: PublicKey,
    pub issuer_signature: Signature,
}

impl Certificate {
    /// The bytes covered by the issuer signature.
    pub fn signed_bytes(&self) -> Vec<u8> {
        Self::tbs(&self.local_id, &self.org_msp_id, self.role, &self.public_key)
    }

    fn tbs(local_id: &str, org: &str, role: Role, pk: &PublicKey) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(local_id).str(org).put(&role).put(pk);
        w.finish()
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_canonical_bytes())
    }

    /// The identity this certificate speaks for. Only meaningful once the
    /// certificate has been verified against its organization.
    pub fn user_id(&self) -> UserId {
        UserId(format!(
            "{}{}{}",
            self.local_id, USER_ID_SEPARATOR, self.org_msp_id
        ))
    }
}

impl Canonical for Certificate {
    fn encode(&self, w: &mut Writer) {
        w.str(&self.local_id)
            .str(&self.org_msp_id)
            .put(&self.role)
            .put(&self.public_key)
            .put(&self.issuer_signature);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Certificate {
            local_id: r.string()?,
            org_msp_id: r.string()?,
            role: r.get()?,
            public_key: r.get()?,
            issuer_signature: r.get()?,
        })
    }
}

/// Globally unique identity string, `local_id@org_msp_id`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn local_id(&self) -> &str {
        self.0.split(USER_ID_SEPARATOR).next().unwrap_or_default()
    }

    pub fn org_msp_id(&self) -> &str {
        self.0.split(USER_ID_SEPARATOR).nth(1).unwrap_or_default()
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parses a reference to some other user (e.g. a co-rider named in
/// arguments). The caller's own identity never comes from here.
impl FromStr for UserId {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(USER_ID_SEPARATOR);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(o), None) if !l.is_empty() && !o.is_empty() => Ok(UserId(s.to_owned())),
            _ => Err(IdentityError::MalformedUserId(s.to_owned())),
        }
    }
}

impl TryFrom<String> for UserId {
    type Error = IdentityError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<UserId> for String {
    fn from(id: UserId) -> String {
        id.0
    }
}

fn validate_name(name: &str) -> Result<(), IdentityError> {
    if name.is_empty() || name.contains(USER_ID_SEPARATOR) {
        return Err(IdentityError::InvalidName(name.to_owned()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Organization {
    pub msp_id: String,
    root_key: SecretKey,
    pub root_public_key: PublicKey,
    registry: BTreeMap<String, Certificate>,
}

impl Organization {
    pub fn certificates(&self) -> impl Iterator<Item = &Certificate> {
        self.registry.values()
    }

    pub fn certificate(&self, local_id: &str) -> Option<&Certificate> {
        self.registry.get(local_id)
    }
}

/// Membership service: the set of organizations and their issued
/// certificates, shared by every node of the network.
///
/// Reads take `&self` and are safe to share; issuance takes `&mut self`, so
/// there is a single writer at a time.
#[derive(Debug)]
pub struct Msp {
    orgs: BTreeMap<String, Organization>,
    rng: ChaCha20Rng,
    verified: RwLock<HashSet<Digest>>,
    /// Digests of (key, message, signature) triples that verified.
    verified_sigs: RwLock<HashSet<Digest>>,
}

impl Default for Msp {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for Msp {
    fn clone(&self) -> Self {
        Msp {
            orgs: self.orgs.clone(),
            rng: self.rng.clone(),
            verified: RwLock::new(HashSet::new()),
            verified_sigs: RwLock::new(HashSet::new()),
        }
    }
}

impl Msp {
    pub fn new() -> Self {
        Self::with_rng(ChaCha20Rng::from_entropy())
    }

    /// Deterministic key generation, for simulations and tests.
    pub fn with_seed(seed: u64) -> Self {
        Self::with_rng(ChaCha20Rng::seed_from_u64(seed))
    }

    fn with_rng(rng: ChaCha20Rng) -> Self {
        Msp {
            orgs: BTreeMap::new(),
            rng,
            verified: RwLock::new(HashSet::new()),
            verified_sigs: RwLock::new(HashSet::new()),
        }
    }

    pub fn create_org(&mut self, name: &str) -> Result<&Organization, IdentityError> {
        validate_name(name)?;
        if self.orgs.contains_key(name) {
            return Err(IdentityError::DuplicateOrg(name.to_owned()));
        }
        let root_key = SecretKey::generate(&mut self.rng);
        let org = Organization {
            msp_id: name.to_owned(),
            root_public_key: root_key.public_key(),
            root_key,
            registry: BTreeMap::new(),
        };
        Ok(self.orgs.entry(name.to_owned()).or_insert(org))
    }

    /// Issues a fresh keypair and certificate. The secret key is returned to
    /// the caller and not retained.
    pub fn issue_certificate(
        &mut self,
        org: &str,
        local_id: &str,
        role: Role,
    ) -> Result<(Certificate, SecretKey), IdentityError> {
        validate_name(local_id)?;
        let Some(o) = self.orgs.get_mut(org) else {
            return Err(IdentityError::UnknownOrg(org.to_owned()));
        };
        if o.registry.contains_key(local_id) {
            return Err(IdentityError::DuplicateLocalId(local_id.to_owned()));
        }
        let key = SecretKey::generate(&mut self.rng);
        let public_key = key.public_key();
        let tbs = Certificate::tbs(local_id, org, role, &public_key);
        let cert = Certificate {
            local_id: local_id.to_owned(),
            org_msp_id: org.to_owned(),
            role,
            public_key,
            issuer_signature: sign(&o.root_key, &tbs),
        };
        o.registry.insert(local_id.to_owned(), cert.clone());
        Ok((cert, key))
    }

    /// True iff the issuer signature verifies under the named organization's
    /// root key. Never errors.
    pub fn verify_certificate(&self, cert: &Certificate) -> bool {
        let Some(org) = self.orgs.get(&cert.org_msp_id) else {
            return false;
        };
        let digest = cert.digest();
        if self.verified.read().is_ok_and(|v| v.contains(&digest)) {
            return true;
        }
        let ok = validate_name(&cert.local_id).is_ok()
            && verify_sig(&org.root_public_key, &cert.signed_bytes(), &cert.issuer_signature);
        if ok {
            if let Ok(mut v) = self.verified.write() {
                v.insert(digest);
            }
        }
        ok
    }

    /// [`verify_sig`] with a memo of successful checks. Every replica
    /// checks the same endorsement signatures, so in a single process the
    /// repeated work is pure overhead. Only exact triples that verified
    /// are remembered.
    pub fn verify_signature(&self, key: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        const LIMIT: usize = 1 << 20;
        let id = Digest::of_parts([&key.0[..], &sig.0[..], message]);
        if self.verified_sigs.read().is_ok_and(|v| v.contains(&id)) {
            return true;
        }
        let ok = verify_sig(key, message, sig);
        if ok {
            if let Ok(mut v) = self.verified_sigs.write() {
                if v.len() >= LIMIT {
                    v.clear();
                }
                v.insert(id);
            }
        }
        ok
    }

    pub fn derive_user_id(&self, cert: &Certificate) -> Result<UserId, IdentityError> {
        if !self.verify_certificate(cert) {
            return Err(IdentityError::InvalidCertificate);
        }
        Ok(cert.user_id())
    }

    pub fn org(&self, msp_id: &str) -> Option<&Organization> {
        self.orgs.get(msp_id)
    }

    pub fn orgs(&self) -> impl Iterator<Item = &Organization> {
        self.orgs.values()
    }
}

#[derive(Serialize, Deserialize)]
struct MspFile {
    orgs: Vec<Organization>,
}

impl Serialize for Msp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MspFile {
            orgs: self.orgs.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Msp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = MspFile::deserialize(d)?;
        let mut msp = Msp::new();
        for org in file.orgs {
            msp.orgs.insert(org.msp_id.clone(), org);
        }
        Ok(msp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msp_with(org: &str) -> Msp {
        let mut msp = Msp::with_seed(9);
        msp.create_org(org).unwrap();
        msp
    }

    #[test]
    fn create_org_rules() {
        let mut msp = Msp::with_seed(1);
        assert_eq!(
            msp.create_org("Org1PeerOrgMSP").unwrap().msp_id,
            "Org1PeerOrgMSP"
        );
        assert_eq!(
            msp.create_org("Org1PeerOrgMSP").unwrap_err(),
            IdentityError::DuplicateOrg("Org1PeerOrgMSP".into())
        );
        assert_eq!(
            msp.create_org("").unwrap_err(),
            IdentityError::InvalidName("".into())
        );
        assert!(matches!(
            msp.create_org("a@b"),
            Err(IdentityError::InvalidName(_))
        ));
    }

    #[test]
    fn issued_certificate_derives_local_at_org_user_id() {
        let mut msp = msp_with("Org2PeerOrgMSP");
        let (cert, _) = msp
            .issue_certificate("Org2PeerOrgMSP", "eDUwOT", Role::Client)
            .unwrap();
        assert!(msp.verify_certificate(&cert));
        assert_eq!(
            msp.derive_user_id(&cert).unwrap().as_str(),
            "eDUwOT@Org2PeerOrgMSP"
        );
        assert_eq!(
            msp.issue_certificate("Org2PeerOrgMSP", "eDUwOT", Role::Client)
                .unwrap_err(),
            IdentityError::DuplicateLocalId("eDUwOT".into())
        );
        assert!(matches!(
            msp.issue_certificate("Nope", "x", Role::Client),
            Err(IdentityError::UnknownOrg(_))
        ));
    }

    #[test]
    fn every_single_field_mutation_is_rejected() {
        let mut msp = msp_with("Org1");
        msp.create_org("Org2").unwrap();
        msp.issue_certificate("Org2", "bob", Role::Client).unwrap();
        let (cert, _) = msp.issue_certificate("Org1", "alice", Role::Client).unwrap();
        let mut mutants = vec![];
        let mut c = cert.clone();
        c.local_id = "alicf".into();
        mutants.push(c);
        let mut c = cert.clone();
        c.org_msp_id = "Org2".into();
        mutants.push(c);
        for role in [Role::Peer, Role::Orderer] {
            let mut c = cert.clone();
            c.role = role;
            mutants.push(c);
        }
        for i in 0..32 {
            let mut c = cert.clone();
            c.public_key.0[i] ^= 0x01;
            mutants.push(c);
        }
        for i in 0..64 {
            let mut c = cert.clone();
            c.issuer_signature.0[i] ^= 0x80;
            mutants.push(c);
        }
        for m in &mutants {
            assert!(!msp.verify_certificate(m), "accepted mutant {m:?}");
        }
        // The cache must not leak acceptance to mutants.
        assert!(msp.verify_certificate(&cert));
    }

    #[test]
    fn unknown_org_is_rejected() {
        let mut other = msp_with("Ghost");
        let (cert, _) = other.issue_certificate("Ghost", "x", Role::Client).unwrap();
        let msp = msp_with("Org1");
        assert!(!msp.verify_certificate(&cert));
        assert_eq!(
            msp.derive_user_id(&cert).unwrap_err(),
            IdentityError::InvalidCertificate
        );
    }

    #[test]
    fn separator_blocks_concatenation_collisions() {
        let mut msp = Msp::with_seed(3);
        msp.create_org("B").unwrap();
        // ("aB", "") is unrepresentable: empty org names are rejected.
        assert!(msp.create_org("").is_err());
        let (c, _) = msp.issue_certificate("B", "a", Role::Client).unwrap();
        assert_eq!(c.user_id().as_str(), "a@B");
        assert_ne!(c.user_id().as_str(), "aB");
    }

    #[test]
    fn user_id_parse() {
        let id: UserId = "eDUwOT@Org2PeerOrgMSP".parse().unwrap();
        assert_eq!(id.local_id(), "eDUwOT");
        assert_eq!(id.org_msp_id(), "Org2PeerOrgMSP");
        for bad in ["", "a", "@b", "a@", "a@b@c"] {
            assert!(bad.parse::<UserId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn certificate_codec_and_serde() {
        let mut msp = msp_with("Org1");
        let (cert, _) = msp.issue_certificate("Org1", "alice", Role::Peer).unwrap();
        let bytes = cert.to_canonical_bytes();
        assert_eq!(Certificate::from_canonical_bytes(&bytes).unwrap(), cert);
        let json = serde_json::to_string(&cert).unwrap();
        assert!(json.contains("\"role\":\"peer\""));
        let back: Certificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn msp_serde_preserves_verification() {
        let mut msp = msp_with("Org1");
        let (cert, _) = msp.issue_certificate("Org1", "alice", Role::Client).unwrap();
        let json = serde_json::to_string(&msp).unwrap();
        let mut back: Msp = serde_json::from_str(&json).unwrap();
        assert!(back.verify_certificate(&cert));
        assert!(back.issue_certificate("Org1", "alice", Role::Client).is_err());
        let (c2, _) = back.issue_certificate("Org1", "bob", Role::Client).unwrap();
        assert!(back.verify_certificate(&c2));
    }
}
