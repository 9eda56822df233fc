fn main() {
    // The timing benchmark factors dense covariance matrices up to
    // 10000x10000; it links the system LAPACK (OpenBLAS-backed) for that.
    println!("cargo:rustc-link-lib=dylib=lapack");
}
