#include "strongstab/benchmarks.hpp"

#include <cmath>

namespace strongstab {

DelaySystem second_order_system(double omega0) {
  DelaySystem s;
  s.n = 2;
  s.m = 1;
  s.p = 1;
  s.A = {Mat{{0.0, omega0}, {omega0, 0.0}}};
  s.B = Mat{{-1.0}, {0.0}};
  s.C = Mat{{1.0, 0.0}};
  return s;
}

DelaySystem third_order_system() {
  DelaySystem s;
  s.n = 3;
  s.m = 1;
  s.p = 1;
  s.A = {Mat{{-1.0, 1.0 / 3.0, 1.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}};
  s.B = Mat{{2.0}, {0.0}, {0.0}};
  s.C = Mat{{0.5, 0.0, 0.5}};
  return s;
}

DelaySystem benchmark_6x3x2_system() {
  DelaySystem s;
  s.n = 6;
  s.m = 3;
  s.p = 2;
  s.A = {
      Mat{{-0.3430, 0.6843, -0.1278, 0.4078, -0.7793, -1.4286},
          {1.6663, 0.0558, -1.4103, 0.2430, -1.7622, -1.1146},
          {-0.7667, -1.4018, 0.6029, 0.3975, -1.9355, 0.9132},
          {2.6355, -1.3601, -0.4569, -0.1757, 1.5269, 0.9764},
          {-0.0168, -1.5217, -0.1397, -0.3175, 0.6787, -1.5769},
          {0.3042, 1.0547, -0.9833, -1.1016, -2.2772, 0.2041}},
      Mat{{-1.1636, -0.0632, -0.0153, 0.1706, 1.0161, 0.3321},
          {0.4537, 0.3837, -1.5704, 1.0775, 1.0633, -1.2500},
          {0.6882, -0.1188, -0.6172, 0.1081, -0.9434, -0.8816},
          {0.4581, 0.4896, -0.7158, 0.2237, -0.2411, -0.2983},
          {0.9957, 0.0992, -0.1938, 0.4602, -0.9461, -0.2692},
          {-1.0270, 0.3322, 0.6574, 0.5190, 0.0591, 0.3468}},
      Mat{{-0.1620, -0.7600, 0.2185, 0.6680, -0.0869, 0.2811},
          {0.3548, 1.1226, -0.1035, 0.0191, 0.8869, -0.1554},
          {-0.0062, -0.1772, -0.5372, -0.1446, 0.4768, -0.2087},
          {0.1849, -0.5384, 0.2619, 0.4180, -0.8080, 0.7966},
          {1.0530, -0.2093, -0.4522, -0.6498, -0.9190, 0.9116},
          {0.2829, 0.0122, -0.0370, 0.0390, -0.0724, -0.0892}},
      Mat{{2.4775, 1.0257, 1.5891, 0.8326, -1.3239, 1.7045},
          {-0.3964, 1.2449, -0.4890, -1.5695, -0.8312, 0.5800},
          {-2.2922, 2.2344, -2.0149, -0.2128, 0.6352, 2.5780},
          {0.1915, 1.4213, -0.8818, 1.5595, -1.1228, -1.1024},
          {0.8404, 0.6028, -1.7115, -0.7325, -1.8020, 2.0994},
          {0.8771, 1.2225, -0.6453, -2.3762, 2.2157, 0.2430}}};
  s.delays = {0.11, 0.21, 1.0};
  s.B = Mat{{-0.7928, -0.1048, 1.7634}, {0.3175, 0.8241, -0.0609},
            {0.3013, -1.0316, -0.1341}, {0.8311, -1.2573, 0.5240},
            {-2.4712, 0.2176, 0.0554},  {0.4338, -0.4529, 1.1995}};
  s.C = Mat{{1.5959, -0.8172, 0.7905, 1.9030, -0.3477, -0.9110},
            {-0.0133, 0.1929, 0.4005, -1.1900, -0.2924, -0.5558}};
  return s;
}

PidGains benchmark_6x3x2_gains() {
  Mat Kp{{2.8615, 10.5346}, {3.9254, 5.3124}, {-3.9750, 13.8184}};
  Mat Kd{{1.7447, -5.2424}, {4.7113, 3.9833}, {0.9434, 12.2535}};
  Mat Ki{{0.6519, 0.0412}, {2.3498, -2.5687}, {1.0265, 1.5849}};
  return PidGains::from(Kp, Kd, Ki);
}

DelaySystem quadcopter_system() {
  const double g = 9.8;
  const double mass = 1.32;
  const double b = 1.5108e-5;
  const double l = 0.214;
  const double Ix = 9.3e-3;
  const double Iy = 9.2e-3;
  // The rotor-drag yaw inertia: 1.51e-2 kg m^2. Validated through the
  // reported spectral radius rho(B Kd C) = 0.4925 of the bundled controller.
  const double Iz = 1.51e-2;
  const double d = 4.406e-7;
  const double omega0 = std::sqrt(mass * g / (4.0 * b));
  const double theta0 = omega0;  // equilibrium rotor speed feeds the thrust channel

  DelaySystem s;
  s.n = 12;
  s.m = 4;
  s.p = 8;
  Mat A = Mat::Zero(12, 12);
  A.block(0, 3, 3, 3) = Mat::Identity(3, 3);
  A.block(3, 6, 3, 3) = Mat{{0.0, -g, 0.0}, {g, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  A.block(6, 9, 3, 3) = Mat::Identity(3, 3);
  s.A = {A};

  Mat B = Mat::Zero(12, 4);
  B.row(5).setConstant(-2.0 * b * theta0 / mass);
  const double roll = 2.0 * l * b * omega0 / Ix;
  const double pitch = 2.0 * l * b * omega0 / Iy;
  const double yaw = 2.0 * d * omega0 / Iz;
  B.row(9) << 0.0, roll, 0.0, -roll;
  B.row(10) << pitch, 0.0, -pitch, 0.0;
  B.row(11) << -yaw, yaw, -yaw, yaw;
  s.B = B;

  Mat C = Mat::Zero(8, 12);
  C.block(0, 0, 3, 3) = Mat::Identity(3, 3);
  C.block(3, 3, 1, 3).setConstant(1.0);
  C.block(4, 6, 3, 3) = Mat::Identity(3, 3);
  C(7, 11) = 1.0;
  s.C = C;
  return s;
}

PidGains quadcopter_gains_pid() {
  Mat Kp{{-5.4621, -37.8386, 50.3201, 2.2475, -81.8761, -81.3841, 20.7403, 20.9480},
         {-43.1886, -19.1534, 28.1863, -49.3413, -5.5520, -3.2277, -23.3179, -28.9068},
         {-13.8907, -20.9904, 43.0970, 3.3196, 66.3708, 64.3681, 32.7644, 44.4112},
         {17.0573, 7.0390, 9.8189, 73.1320, 21.4069, 16.2811, -22.8678, -12.1369}};
  Mat Kd{{2.6020, -35.2924, 30.7326, 4.6261, -26.2670, -44.9325, 19.4149, 11.9269},
         {-46.6939, -28.3477, 24.5842, -47.1050, -52.6639, 0.5357, -26.7642, -12.0257},
         {-25.7283, 5.1204, 21.7455, 16.7965, 19.4925, 48.8419, 43.1543, -1.4350},
         {33.9343, 13.0930, 26.7705, 62.2667, 45.2039, -3.5705, -10.7538, 8.9672}};
  Mat Ki{{20.3716, -4.9418, 23.0753, 9.2952, -5.5020, -0.1435, 10.1706, 20.7039},
         {-15.7922, -15.7094, -12.4776, -32.2340, -5.9862, 5.4981, -16.9445, -23.1467},
         {-35.2062, 0.9211, 1.7405, 6.6778, 0.9162, 1.9864, 11.1697, 32.2109},
         {-6.5286, 10.7784, -21.8867, 36.4701, 0.9330, -2.7628, -24.3316, -23.2082}};
  return PidGains::from(Kp, Kd, Ki);
}

PidGains quadcopter_gains_input_delay() {
  Mat Kp{{16.6430, -63.3128, 62.1810, 4.4335, -66.8876, -68.0598, 16.3207, 16.5152},
         {-50.8533, -19.3299, 30.2406, -36.1548, -9.8565, -12.9958, -31.7057, -26.1467},
         {-50.0849, 5.6587, 42.9924, 13.2329, 58.8861, 52.4494, 55.4277, 42.7279},
         {10.3170, 15.6469, 8.9039, 75.0145, 19.3511, 16.4770, -32.1567, -8.2343}};
  Mat Kd{{24.1572, -13.2747, 29.8087, 17.3038, 4.6970, -33.3402, 5.7379, -1.0075},
         {-25.7786, 4.0052, -9.0192, -1.2406, -19.6114, -13.1057, -14.1845, -4.0257},
         {-44.9690, 8.0431, 14.2946, 8.2878, 6.5073, 0.3612, 9.4864, -1.4291},
         {-16.8650, -2.2785, 3.3891, 26.6494, 11.8299, -24.9899, -20.4291, -1.1029}};
  Mat Ki{{3.7628, -33.6333, 37.4261, 13.1179, -27.1173, -45.3188, 15.8870, 7.5073},
         {-45.3248, -37.6528, 26.1769, -52.8919, -50.6522, 1.5547, -25.0178, -20.4135},
         {-18.7744, -0.9240, 14.8563, 7.1468, 20.2193, 49.8381, 41.4465, 21.2283},
         {28.9560, 27.5731, 27.6152, 63.2191, 43.8716, -2.5157, -6.3298, -0.3217}};
  return PidGains::from(Kp, Kd, Ki);
}

PidGains pd_gains(double kp, double kd) {
  return PidGains::from(Mat{{kp}}, Mat{{kd}}, Mat{{0.0}});
}

std::vector<RegionSample> third_order_region_samples() {
  return {{-2.0, 0.5, 2}, {0.5, 2.0, 2},  {-2.0, 2.0, 3},
          {0.5, -0.5, 1}, {3.5, 2.0, 0},  {-2.0, -1.75, 0}};
}

}  // namespace strongstab
