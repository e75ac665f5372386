use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("weights must be finite and nonnegative; index {index} holds {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("weights have no positive entry")]
    ZeroMass,

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("{name} = {value} is outside {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("bits per message must be in 1..={max}, got {bits}")]
    BitBudget { bits: u32, max: u32 },

    #[error("fewer clients than groups: {clients} clients for {groups} groups")]
    TooFewClients { clients: usize, groups: usize },

    #[error(
        "group sizes need {required} client slots but {clients} clients x {per_client} \
         slots provide only {capacity}; increase n"
    )]
    CapacityExceeded {
        required: usize,
        clients: usize,
        per_client: usize,
        capacity: usize,
    },

    #[error("group {group} needs {size} distinct clients but only {clients} are available")]
    GroupTooLarge {
        group: usize,
        size: usize,
        clients: usize,
    },

    #[error("client {client} sent message {message}, allowed range is 0..={max}")]
    ProtocolViolation {
        client: usize,
        message: u32,
        max: u32,
    },

    #[error("expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("unknown scheme `{0}` (expected `minimax` or `lr`)")]
    UnknownScheme(String),
}
