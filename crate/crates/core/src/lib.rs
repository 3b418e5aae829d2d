//! SINet: a dual SMILES + InChI convolutional/recurrent regressor for
//! HOMO energies, with the tensor engine, data handling, training,
//! transfer learning and Scharber-model utilities around it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod encoding;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod scharber;
pub mod synthetic;
pub mod tensor;
pub mod training;
pub mod transfer;

pub use adam::AdamState;
pub use autodiff::{Gradients, NodeId, Tape};
pub use checkpoint::{load_checkpoint, load_checkpoint_with_id, save_checkpoint};
pub use data::{Dataset, MoleculeRecord};
pub use encoding::{EncoderSpec, OverflowPolicy, UnknownPolicy, Vocabulary};
pub use error::{Result, SinetError};
pub use model::{SinetConfig, SinetModel, Variant};
pub use tensor::Tensor;
pub use training::{train, History, Metrics, TrainConfig};
pub use transfer::{compare_transfer, finetune, TransferReport};
