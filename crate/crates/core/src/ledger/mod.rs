//! Account ledger: five transaction types, validation, blocks and export.

mod block;
mod state;
mod store;
mod tx;

pub use block::*;
pub use state::*;
pub use store::ContentStore;
pub use tx::*;
