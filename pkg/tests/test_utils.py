from unittest import main, TestCase

from fixnormlab import utils


class TestFormatting(TestCase):

    def test_percent(self):
        self.assertEqual(utils.format_percent(0.975), ' 97.50 %')

    def test_budget(self):
        self.assertEqual(utils.format_budget(330, 30), '330 steps = 11 x single training')
        self.assertEqual(utils.format_budget(66, 12), '66 steps = 5.5 x single training')
        self.assertEqual(utils.format_budget(12, 0), '    12 steps')

    def test_time(self):
        self.assertEqual(utils.format_time(5), ' 5 s')
        self.assertEqual(utils.format_time(125), '2:05')
        self.assertEqual(utils.format_time(3725), '1:02:05')

    def test_lr(self):
        self.assertEqual(utils.format_lr(0.05 + 0.63), '0.68')
        self.assertEqual(utils.format_lr(3.2), '3.2')


if __name__ == '__main__':
    main()
