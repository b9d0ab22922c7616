#![allow(dead_code)]

pub mod augment_check;
pub mod cli_run;
pub mod episode_check;
pub mod gradcheck;
pub mod loss_check;
pub mod maml_check;
