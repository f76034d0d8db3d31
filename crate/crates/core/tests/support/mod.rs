#![allow(dead_code)]

pub mod eca_corpus;
pub mod noonbreak;
pub mod retrieval_oracle;
pub mod similarity_props;
