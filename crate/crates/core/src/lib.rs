//! Double active RIS downlink with inter-RIS feedback: signal model,
//! weighted sum-rate objective and a penalty dual decomposition optimizer.

pub mod channel;
pub mod excitation;
pub mod numerics;
pub mod objective;
pub mod pdd;
pub mod bench;
