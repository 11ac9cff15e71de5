"""Hard-coded real spherical harmonics polynomials (generated by tools/gen_sh.py)."""

import numpy as np

MAX_DEGREE = 7


def eval_sh_poly(degree, x, y, z, out):
    """Fill ``out[..., :(degree + 1) ** 2]`` for unit vectors (x, y, z)."""
    x1, y1, z1 = x, y, z
    x2 = x1 * x; y2 = y1 * y; z2 = z1 * z
    x3 = x2 * x; y3 = y2 * y; z3 = z2 * z
    x4 = x3 * x; y4 = y3 * y; z4 = z3 * z
    x5 = x4 * x; y5 = y4 * y; z5 = z4 * z
    x6 = x5 * x; y6 = y5 * y; z6 = z5 * z
    x7 = x6 * x; y7 = y6 * y; z7 = z6 * z
    out[..., 0] = np.full_like(x, 0.28209479177387814)
    if degree < 1:
        return out
    out[..., 1] = 0.4886025119029199 * y1
    out[..., 2] = 0.4886025119029199 * z1
    out[..., 3] = 0.4886025119029199 * x1
    if degree < 2:
        return out
    out[..., 4] = 1.0925484305920792 * x1 * y1
    out[..., 5] = 1.0925484305920792 * y1 * z1
    out[..., 6] = 0.94617469575756 * z2 - 0.31539156525252
    out[..., 7] = 1.0925484305920792 * x1 * z1
    out[..., 8] = 0.5462742152960396 * x2 - 0.5462742152960396 * y2
    if degree < 3:
        return out
    out[..., 9] = 1.7701307697799304 * x2 * y1 - 0.5900435899266435 * y3
    out[..., 10] = 2.8906114426405543 * x1 * y1 * z1
    out[..., 11] = 2.2852289973223288 * y1 * z2 - 0.4570457994644657 * y1
    out[..., 12] = 1.865881662950577 * z3 - 1.1195289977703462 * z1
    out[..., 13] = 2.2852289973223288 * x1 * z2 - 0.4570457994644657 * x1
    out[..., 14] = 1.4453057213202771 * x2 * z1 - 1.4453057213202771 * y2 * z1
    out[..., 15] = 0.5900435899266435 * x3 - 1.7701307697799304 * x1 * y2
    if degree < 4:
        return out
    out[..., 16] = 2.5033429417967046 * x3 * y1 - 2.5033429417967046 * x1 * y3
    out[..., 17] = 5.310392309339791 * x2 * y1 * z1 - 1.7701307697799304 * y3 * z1
    out[..., 18] = 6.62322287030292 * x1 * y1 * z2 - 0.94617469575756 * x1 * y1
    out[..., 19] = 4.683325804901024 * y1 * z3 - 2.0071396306718676 * y1 * z1
    out[..., 20] = 3.7024941420321507 * z4 - 3.173566407456129 * z2 + 0.31735664074561293
    out[..., 21] = 4.683325804901024 * x1 * z3 - 2.0071396306718676 * x1 * z1
    out[..., 22] = 3.31161143515146 * x2 * z2 - 0.47308734787878 * x2 - 3.31161143515146 * y2 * z2 + 0.47308734787878 * y2
    out[..., 23] = 1.7701307697799304 * x3 * z1 - 5.310392309339791 * x1 * y2 * z1
    out[..., 24] = 0.6258357354491761 * x4 - 3.755014412695057 * x2 * y2 + 0.6258357354491761 * y4
    if degree < 5:
        return out
    out[..., 25] = 3.2819102842008503 * x4 * y1 - 6.563820568401701 * x2 * y3 + 0.6563820568401701 * y5
    out[..., 26] = 8.302649259524165 * x3 * y1 * z1 - 8.302649259524165 * x1 * y3 * z1
    out[..., 27] = 13.209434084751761 * x2 * y1 * z2 - 1.467714898305751 * x2 * y1 - 4.403144694917254 * y3 * z2 + 0.4892382994352504 * y3
    out[..., 28] = 14.380610354919972 * x1 * y1 * z3 - 4.793536784973324 * x1 * y1 * z1
    out[..., 29] = 9.511879675109636 * y1 * z4 - 6.341253116739757 * y1 * z2 + 0.45294665119569694 * y1
    out[..., 30] = 7.367870314565686 * z5 - 8.186522571739651 * z3 + 1.754254836801354 * z1
    out[..., 31] = 9.511879675109636 * x1 * z4 - 6.341253116739757 * x1 * z2 + 0.45294665119569694 * x1
    out[..., 32] = 7.190305177459986 * x2 * z3 - 2.396768392486662 * x2 * z1 - 7.190305177459986 * y2 * z3 + 2.396768392486662 * y2 * z1
    out[..., 33] = 4.403144694917254 * x3 * z2 - 0.4892382994352504 * x3 - 13.209434084751761 * x1 * y2 * z2 + 1.467714898305751 * x1 * y2
    out[..., 34] = 2.075662314881041 * x4 * z1 - 12.453973889286248 * x2 * y2 * z1 + 2.075662314881041 * y4 * z1
    out[..., 35] = 0.6563820568401701 * x5 - 6.563820568401701 * x3 * y2 + 3.2819102842008503 * x1 * y4
    if degree < 6:
        return out
    out[..., 36] = 4.099104631151486 * x5 * y1 - 13.663682103838287 * x3 * y3 + 4.099104631151486 * x1 * y5
    out[..., 37] = 11.83309581115876 * x4 * y1 * z1 - 23.66619162231752 * x2 * y3 * z1 + 2.366619162231752 * y5 * z1
    out[..., 38] = 22.200855632063863 * x3 * y1 * z2 - 2.0182596029148967 * x3 * y1 - 22.200855632063863 * x1 * y3 * z2 + 2.0182596029148967 * x1 * y3
    out[..., 39] = 30.399773563992476 * x2 * y1 * z3 - 8.29084733563431 * x2 * y1 * z1 - 10.133257854664159 * y3 * z3 + 2.7636157785447706 * y3 * z1
    out[..., 40] = 30.399773563992476 * x1 * y1 * z4 - 16.58169467126862 * x1 * y1 * z2 + 0.9212052595149235 * x1 * y1
    out[..., 41] = 19.226504963118135 * y1 * z5 - 17.478640875561943 * y1 * z3 + 2.913106812593657 * y1 * z1
    out[..., 42] = 14.684485723822167 * z6 - 20.024298714302954 * z4 + 6.674766238100985 * z2 - 0.3178460113381421
    out[..., 43] = 19.226504963118135 * x1 * z5 - 17.478640875561943 * x1 * z3 + 2.913106812593657 * x1 * z1
    out[..., 44] = 15.199886781996238 * x2 * z4 - 8.29084733563431 * x2 * z2 + 0.46060262975746175 * x2 - 15.199886781996238 * y2 * z4 + 8.29084733563431 * y2 * z2 - 0.46060262975746175 * y2
    out[..., 45] = 10.133257854664159 * x3 * z3 - 2.7636157785447706 * x3 * z1 - 30.399773563992476 * x1 * y2 * z3 + 8.29084733563431 * x1 * y2 * z1
    out[..., 46] = 5.550213908015966 * x4 * z2 - 0.5045649007287242 * x4 - 33.301283448095795 * x2 * y2 * z2 + 3.027389404372345 * x2 * y2 + 5.550213908015966 * y4 * z2 - 0.5045649007287242 * y4
    out[..., 47] = 2.366619162231752 * x5 * z1 - 23.66619162231752 * x3 * y2 * z1 + 11.83309581115876 * x1 * y4 * z1
    out[..., 48] = 0.6831841051919143 * x6 - 10.247761577878714 * x4 * y2 + 10.247761577878714 * x2 * y4 - 0.6831841051919143 * y6
    if degree < 7:
        return out
    out[..., 49] = 4.950139127672173 * x6 * y1 - 24.750695638360867 * x4 * y3 + 14.85041738301652 * x2 * y5 - 0.7071627325245962 * y7
    out[..., 50] = 15.875763970811402 * x5 * y1 * z1 - 52.919213236038004 * x3 * y3 * z1 + 15.875763970811402 * x1 * y5 * z1
    out[..., 51] = 33.72951261681692 * x4 * y1 * z2 - 2.5945778936013015 * x4 * y1 - 67.45902523363384 * x2 * y3 * z2 + 5.189155787202603 * x2 * y3 + 6.745902523363384 * y5 * z2 - 0.5189155787202603 * y5
    out[..., 52] = 53.96722018690707 * x3 * y1 * z3 - 12.453973889286248 * x3 * y1 * z1 - 53.96722018690707 * x1 * y3 * z3 + 12.453973889286248 * x1 * y3 * z1
    out[..., 53] = 67.12088262692414 * x2 * y1 * z4 - 30.97886890473422 * x2 * y1 * z2 + 1.4081304047606462 * x2 * y1 - 22.373627542308046 * y3 * z4 + 10.326289634911406 * y3 * z2 - 0.4693768015868821 * y3
    out[..., 54] = 63.28217501963252 * x1 * y1 * z5 - 48.67859616894809 * x1 * y1 * z3 + 6.63799038667474 * x1 * y1 * z1
    out[..., 55] = 38.75225965289993 * y1 * z6 - 44.714145753346074 * y1 * z4 + 12.194767023639837 * y1 * z2 - 0.4516580379125866 * y1
    out[..., 56] = 29.29395479525012 * z7 - 47.32100390001943 * z5 + 21.50954722728156 * z3 - 2.389949691920173 * z1
    out[..., 57] = 38.75225965289993 * x1 * z6 - 44.714145753346074 * x1 * z4 + 12.194767023639837 * x1 * z2 - 0.4516580379125866 * x1
    out[..., 58] = 31.64108750981626 * x2 * z5 - 24.339298084474045 * x2 * z3 + 3.31899519333737 * x2 * z1 - 31.64108750981626 * y2 * z5 + 24.339298084474045 * y2 * z3 - 3.31899519333737 * y2 * z1
    out[..., 59] = 22.373627542308046 * x3 * z4 - 10.326289634911406 * x3 * z2 + 0.4693768015868821 * x3 - 67.12088262692414 * x1 * y2 * z4 + 30.97886890473422 * x1 * y2 * z2 - 1.4081304047606462 * x1 * y2
    out[..., 60] = 13.491805046726768 * x4 * z3 - 3.113493472321562 * x4 * z1 - 80.9508302803606 * x2 * y2 * z3 + 18.680960833929372 * x2 * y2 * z1 + 13.491805046726768 * y4 * z3 - 3.113493472321562 * y4 * z1
    out[..., 61] = 6.745902523363384 * x5 * z2 - 0.5189155787202603 * x5 - 67.45902523363384 * x3 * y2 * z2 + 5.189155787202603 * x3 * y2 + 33.72951261681692 * x1 * y4 * z2 - 2.5945778936013015 * x1 * y4
    out[..., 62] = 2.6459606618019 * x6 * z1 - 39.68940992702851 * x4 * y2 * z1 + 39.68940992702851 * x2 * y4 * z1 - 2.6459606618019 * y6 * z1
    out[..., 63] = 0.7071627325245962 * x7 - 14.85041738301652 * x5 * y2 + 24.750695638360867 * x3 * y4 - 4.950139127672173 * x1 * y6
    return out
