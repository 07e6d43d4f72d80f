//! Core of a permissioned ride-hailing network: certificate authorities,
//! a hash-chained ledger with versioned world state, and the ride contract.

pub mod chaincode;
pub mod codec;
pub mod crypto;
pub mod identity;
pub mod ledger;
