pub mod pointset;
pub mod selflabel;
pub mod encoder;
pub mod gss;
pub mod synthdata;
pub mod trainloop;
pub mod eval;
