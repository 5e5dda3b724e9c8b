pub mod linalg;
pub mod ode;
pub mod quad;
pub mod roots;
