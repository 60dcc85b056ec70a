//! Dense tensors, recurrent cells, loss, BPTT, SGD and initialization.

pub mod cells;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod model;
pub mod tensor;

pub use cells::{
    elman_step, lstm_step, o2rnn_step, one_hot, Activation, CellParams, CellState, CellVariant,
    ElmanParams, LstmParams, O2rnnParams,
};
pub use checkpoint::Checkpoint;
pub use init::{initialize, InitStrategy};
pub use model::{
    bce_grad, bce_loss, bptt_gradients, classify, forward_sequence, mean_loss, sgd_step, Backprop,
    ClassifierParams, Forward, Freeze, Gradients, Model,
};
pub use tensor::{sigmoid, FloatWidth, Real, Tensor};
