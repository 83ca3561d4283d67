pub mod eval;
pub mod geom;
pub mod imu;
pub mod init;
pub mod io;
pub mod matching;
pub mod sim;
