use crate::scalar::Real;

/// Largest coordinate-wise disagreement between a reverse-mode gradient and central differences,
/// measured as `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`.
///
/// `f` returns the function value together with its reverse-mode gradient at the given point.
pub fn grad_check<T: Real>(f: impl Fn(&[T]) -> (T, Vec<T>), point: &[T], eps: T) -> T {
    let (_, analytic) = f(point);
    assert_eq!(analytic.len(), point.len(), "gradient length must match the point");
    let two = T::one() + T::one();
    let mut x = point.to_vec();
    let mut worst = T::zero();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x).0;
        x[i] = orig - eps;
        let down = f(&x).0;
        x[i] = orig;
        let fd = (up - down) / (two * eps);
        let ad = analytic[i];
        let denom = T::one().max(ad.abs()).max(fd.abs());
        worst = worst.max((ad - fd).abs() / denom);
    }
    worst
}
